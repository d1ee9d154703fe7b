// Copyright 2026 The edistill Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef EDISTILL_TOOLS_CLI_HPP_
#define EDISTILL_TOOLS_CLI_HPP_

#include <string>
#include <vector>

namespace edistill::tools {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Splices `--config FILE` (flat `key = value` lines, `#` comments) into the
// argument list right after the subcommand, ahead of the explicit flags, so
// explicit flags win. Throws std::runtime_error on unreadable files or bad
// lines.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

int run(int argc, char** argv);

}  // namespace edistill::tools

#endif  // EDISTILL_TOOLS_CLI_HPP_
