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

// Gradient flow of a projection pair (Q: D x D', O: D' x D) on the linear
// autoencoder loss  (1/2L) ||X - X Q O||_F^2,  plus the spectral quantities
// that characterise it: singular values of M = QO, the balancedness
// Q^T Q - O O^T, and the coupling sigma_Q = sigma_O = sqrt(sigma_M).

#ifndef EDISTILL_FLOWSIM_HPP_
#define EDISTILL_FLOWSIM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "edistill/linalg.hpp"

namespace edistill::flowsim {

struct ProjectionPair {
  Matrix q;  // D x D'
  Matrix o;  // D' x D

  Index dim() const { return q.rows(); }
  Index reduced_dim() const { return q.cols(); }
  Matrix product() const { return q * o; }
};

// Throws kDomain unless q is D x D' and o is D' x D with finite entries.
void check_pair(const ProjectionPair& p);

enum class Integrator { kEuler, kRk4 };

struct FlowConfig {
  double step_size = 1e-3;  // eta
  std::int64_t num_steps = 1000;
  Integrator integrator = Integrator::kEuler;
  std::int64_t record_every = 10;
  std::uint64_t seed = 0;
};

struct SpectralSnapshot {
  std::int64_t step = 0;
  Vector sigma_m;  // leading D' singular values of QO, descending
  Vector sigma_q;
  Vector sigma_o;
  double loss = 0.0;
  double balancedness_drift = 0.0;
  double hidden_erank = 0.0;  // eRank of XQ; NaN when XQ is all zero
};

struct FlowTrace {
  FlowConfig config;
  std::vector<SpectralSnapshot> snapshots;

  // Snapshot at exactly `step`; throws kDomain if it was not recorded.
  const SpectralSnapshot& at(std::int64_t step) const;
};

struct Gradients {
  Matrix grad_o;  // D' x D
  Matrix grad_q;  // D x D'
};

// Sigma = (1/L) X^T X.
Matrix covariance(const Matrix& x);

double recon_loss(const Matrix& x, const ProjectionPair& p);

// +grad of the loss (the flow follows the negative):
//   grad_O = Q^T Sigma (QO - I),  grad_Q = Sigma (QO - I) O^T.
Gradients flow_gradients(const Matrix& x, const ProjectionPair& p);
Gradients flow_gradients_cov(const Matrix& sigma, const ProjectionPair& p);

// One integrator step of  Q' = -grad_Q, O' = -grad_O.
ProjectionPair flow_step(const Matrix& sigma, const ProjectionPair& p,
                         double eta, Integrator integrator);

// Integrates the flow and records snapshots at step 0, every record_every
// steps, and the final step. Throws kDivergence (message carries the step)
// on non-finite values or when the loss exceeds 1e6x its initial value.
FlowTrace simulate(const Matrix& x, const ProjectionPair& init,
                   const FlowConfig& cfg);

SpectralSnapshot snapshot(const Matrix& x, const ProjectionPair& p,
                          std::int64_t step);

struct SvdResult {
  Vector sigma;  // descending
  Matrix u;      // left singular vectors; first nonzero entry of each > 0
  Matrix v;
};

// Full SVD with the sign convention above applied to (u, v) jointly.
SvdResult oriented_svd(const Matrix& m);

struct SigmaDotPrediction {
  Vector rate;                // sigma_dot for r < D'
  std::vector<bool> reliable; // false when the singular-value gap is tiny
};

// sigma_dot^r = 2 sigma^r u_r^T Sigma (v_r - sigma^r u_r) for the leading
// `reduced_dim` singular triplets of m. Indices whose gap to any other
// singular value of m is below 1e-6 * sigma_max are flagged unreliable.
SigmaDotPrediction predicted_sigma_dot(const Matrix& sigma_cov,
                                       const Matrix& m, Index reduced_dim);

// ||Q^T Q - O O^T||_F
double balancedness_drift(const ProjectionPair& p);

// max_r max(|sigma_Q^r - sigma_O^r|, |sigma_Q^r - sqrt(sigma_M^r)|)
double spectral_coupling_residual(const ProjectionPair& p);

// Pearson r between sigma_M at from_step and its growth up to to_step,
// paired by rank index. Throws kUndefinedCorrelation on zero variance.
double growth_correlation(const FlowTrace& trace, std::int64_t from_step,
                          std::int64_t to_step);

// CSV: step,loss,drift,erank,sigma_1..sigma_D'
std::string trace_csv(const FlowTrace& trace);
std::string to_string(Integrator integrator);
Integrator parse_integrator(const std::string& name);

}  // namespace edistill::flowsim

#endif  // EDISTILL_FLOWSIM_HPP_
