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

// Channel importance estimation over activation dumps and the projection
// initializations built from it.

#ifndef EDISTILL_INITLAB_HPP_
#define EDISTILL_INITLAB_HPP_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "edistill/dumps.hpp"
#include "edistill/flowsim.hpp"
#include "edistill/linalg.hpp"

namespace edistill::initlab {

using flowsim::ProjectionPair;

enum class Strategy { kMeanAbs, kPostnorm, kQrPivot };

std::string to_string(Strategy s);
// Throws kDomain on an unknown name ("mean_abs", "postnorm", "qr_pivot").
Strategy parse_strategy(const std::string& name);

struct ImportanceReport {
  Vector scores;  // length D, >= 0
  Strategy strategy = Strategy::kMeanAbs;
  std::size_t num_layers_used = 0;
  std::size_t num_sequences_used = 0;
};

struct ChannelSelection {
  std::vector<Index> indices;  // strictly increasing, size D'
  Strategy source = Strategy::kMeanAbs;
};

// s_{i,j}^(k) = mean_l |X_i^{l,(k)}_j|;  s_j = mean_i sqrt(sum_k s_{i,j}^2)
// over layers 0..N.
ImportanceReport importance_mean_abs(const dumps::ActivationDump& dump);

// Same rule over the 2N post-norm streams; kCapability without them.
ImportanceReport importance_postnorm(const dumps::ActivationDump& dump);

// Column-pivoted QR of each layer's stacked activations; channel j scores
// |R_tt| at the pivot step t that selected it (0 past the numerical rank),
// then layers aggregate with the mean-of-L2 rule.
ImportanceReport importance_qr(const dumps::ActivationDump& dump);

ImportanceReport importance(const dumps::ActivationDump& dump, Strategy s);

struct PivotedQr {
  std::vector<Index> pivot_order;  // column chosen at each step
  Vector scores;                   // |R_tt| mapped back to column index
  Index rank = 0;
};

// Single-matrix building block of importance_qr. Throws kDegenerate on an
// all-zero matrix.
PivotedQr pivoted_qr_scores(const Matrix& a);

// Indices of the dprime largest scores, ties to the smaller index, sorted.
ChannelSelection select_topk(const ImportanceReport& report, Index dprime);

// Q = H (D x D', H_ij = 1 iff i = G_j), O = H^T.
ProjectionPair build_selection_pair(const ChannelSelection& g, Index dim);

struct ChannelSelect {
  ChannelSelection selection;
};
struct Gaussian {
  double stddev = 0.02;
};
struct Orthogonal {};

struct InitSpec {
  std::variant<ChannelSelect, Gaussian, Orthogonal> kind = Gaussian{};
  std::uint64_t seed = 0;

  std::string name() const;
};

// gaussian: i.i.d. N(0, std^2) in Q and O; orthogonal: Haar Q with
// orthonormal columns and O = Q^T. Channel-select specs dispatch to
// build_selection_pair.
ProjectionPair build_random_pair(const InitSpec& spec, Index dim,
                                 Index dprime);
ProjectionPair build_pair(const InitSpec& spec, Index dim, Index dprime);

// |A intersect B| / D'.
double overlap_ratio(const ChannelSelection& a, const ChannelSelection& b);

struct SplitCheck {
  ChannelSelection first;
  ChannelSelection second;
  double overlap = 0.0;
};

// Scores each half of the dump's sequences separately and compares the
// resulting top-D' selections. Needs K >= 2.
SplitCheck split_half_overlap(const dumps::ActivationDump& dump,
                              Strategy strategy, Index dprime);

std::string report_json(const ImportanceReport& report,
                        const ChannelSelection* selection);

}  // namespace edistill::initlab

#endif  // EDISTILL_INITLAB_HPP_
