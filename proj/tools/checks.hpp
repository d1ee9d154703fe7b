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


// Numerical checks of the gradient-flow properties and the distinguishability
// bounds, shared by the `flow` and `check` subcommands.

#ifndef EDISTILL_TOOLS_CHECKS_HPP_
#define EDISTILL_TOOLS_CHECKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "edistill/flowsim.hpp"
#include "edistill/linalg.hpp"

namespace edistill::tools {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

nlohmann::ordered_json to_json(const CheckResult& r);
nlohmann::ordered_json to_json(const std::vector<CheckResult>& rs);
bool all_pass(const std::vector<CheckResult>& rs);

// Max relative error of flow_gradients against central differences of
// recon_loss, over `instances` random pairs on x.
CheckResult check_gradients(const Matrix& x, Index dprime, int instances,
                            Rng& rng);

// Euler drift of ||Q^T Q - O O^T|| from a balanced start over a fixed
// horizon: drift(eta/2) <= 0.6 drift(eta).
CheckResult check_balancedness(const Matrix& sigma,
                               const flowsim::ProjectionPair& balanced,
                               double eta, double horizon);

// sigma_Q = sigma_O = sqrt(sigma_M) at every snapshot of a trace.
CheckResult check_coupling(const flowsim::FlowTrace& trace);

// Predicted sigma_dot against central differences along an RK4 trajectory at
// eta = 1e-4; >= 95% of gap-separated points within 1e-3 relative.
CheckResult check_sigma_dot(const Matrix& sigma,
                            const flowsim::ProjectionPair& balanced,
                            std::int64_t steps);

// One Euler step from a channel-selection pair: max |dsigma| scales
// quadratically, ratio(eta/2 : eta) <= 0.3.
CheckResult check_vanishing(const Matrix& sigma,
                            const flowsim::ProjectionPair& selection,
                            double eta);

// Jensen, cosine, TV and rank-1 suites over `count` random matrices.
std::vector<CheckResult> check_bounds(int count, Rng& rng);

// Wrapped vs merged blocks over `count` random layers.
CheckResult check_merge(int count, Rng& rng);

// Smallest sigma_r / sigma_1 of QO over the run, restricted to the nonzero
// singular values of each snapshot.
double min_relative_sigma(const flowsim::FlowTrace& trace);

}  // namespace edistill::tools

#endif  // EDISTILL_TOOLS_CHECKS_HPP_
