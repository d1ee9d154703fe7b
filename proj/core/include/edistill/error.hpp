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

#ifndef EDISTILL_ERROR_HPP_
#define EDISTILL_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace edistill {

enum class ErrorKind {
  kFormat,             // shapes or flags inconsistent with a manifest
  kData,               // non-finite values
  kUnsupportedFormat,  // bad magic or version
  kCorruptDump,        // truncated or malformed stream
  kDomain,             // argument outside an operation's domain
  kDegenerate,         // zero rows, zero spectra, rank-0 inputs
  kCapability,         // input lacks a stream the operation needs
  kDivergence,         // integration or training blew up
  kUndefinedCorrelation,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace edistill

#endif  // EDISTILL_ERROR_HPP_
