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

// Full-batch Adam training of the linear autoencoder proxy X -> XQ -> XQO.

#ifndef EDISTILL_PROXYTRAIN_HPP_
#define EDISTILL_PROXYTRAIN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "edistill/flowsim.hpp"
#include "edistill/initlab.hpp"

namespace edistill::proxytrain {

using flowsim::ProjectionPair;

struct TrainConfig {
  double learning_rate = 1e-4;
  std::int64_t epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double orthogonal_penalty_weight = 0.0;
  std::uint64_t seed = 0;
  // Re-center and row-normalize XQ / XQO before measuring eRank.
  bool reprep_erank = false;
};

void check_config(const TrainConfig& cfg);

struct AdamState {
  Matrix m_q, v_q;  // moments shaped like Q
  Matrix m_o, v_o;  // moments shaped like O
  std::int64_t step = 0;

  static AdamState zeros_like(const ProjectionPair& p);
};

// In-place bias-corrected Adam update of both matrices.
void adam_step(ProjectionPair& p, const flowsim::Gradients& g, AdamState& s,
               const TrainConfig& cfg);

struct PenaltyResult {
  double value = 0.0;
  Matrix grad_q;
  Matrix grad_o;
};

// weight * (||Q^T Q - I||_F^2 + ||O O^T - I||_F^2) and its gradients
// 4 w Q (Q^T Q - I), 4 w (O O^T - I) O.
PenaltyResult orthogonal_penalty(const ProjectionPair& p, double weight);

struct TrainReport {
  double final_loss = 0.0;       // reconstruction loss only
  double hidden_erank = 0.0;     // eRank of XQ
  double recon_erank = 0.0;      // eRank of XQO
  std::vector<double> loss_curve;  // total loss at epoch 0..epochs
  std::string init_kind;
  ProjectionPair final_pair;
};

TrainReport train_from_pair(const Matrix& x, ProjectionPair init,
                            const std::string& init_kind,
                            const TrainConfig& cfg);

// Builds the pair from the spec (D' inferred from a channel selection, or
// given explicitly for random kinds) and trains it.
TrainReport train_autoencoder(const Matrix& x, const initlab::InitSpec& init,
                              Index dprime, const TrainConfig& cfg);

std::string report_json(const TrainReport& report);
std::string loss_curve_csv(const TrainReport& report);

}  // namespace edistill::proxytrain

#endif  // EDISTILL_PROXYTRAIN_HPP_
