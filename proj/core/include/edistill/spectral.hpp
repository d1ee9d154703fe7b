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

// Representation preprocessing and spectral / distinguishability diagnostics.
//
// All logarithms are natural. Every function here is pure.

#ifndef EDISTILL_SPECTRAL_HPP_
#define EDISTILL_SPECTRAL_HPP_

#include <string>
#include <utility>
#include <vector>

#include "edistill/dumps.hpp"
#include "edistill/linalg.hpp"

namespace edistill::spectral {

// Zero-centered (over tokens) and row-normalized representation. Every row
// has unit Euclidean norm; the column means left after normalization are
// reported, not forced to zero.
class PreppedMatrix {
 public:
  const Matrix& data() const { return data_; }
  double centering_residual() const { return centering_residual_; }
  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }

  // Wraps a matrix whose rows are already unit norm (checked to 1e-9).
  static PreppedMatrix from_unit_rows(Matrix rows);

 private:
  friend PreppedMatrix preprocess(const Matrix&, bool);
  PreppedMatrix(Matrix data, double residual)
      : data_(std::move(data)), centering_residual_(residual) {}

  Matrix data_;
  double centering_residual_ = 0.0;
};

// Centers columns, then scales each row to unit norm. center=false skips the
// centering step (used for cone-constrained ensembles, where centering would
// destroy the common direction).
PreppedMatrix preprocess(const Matrix& x, bool center = true);

struct SpectrumSummary {
  Vector eigenvalues;    // descending, >= 0
  Vector probabilities;  // eigenvalues / sum
  double erank = 1.0;
  double collision_probability = 1.0;  // sum p_j^2
  Index numerical_rank = 0;            // count of nonzero eigenvalues
};

// eRank of (1/L) X^T X: exp of the Shannon entropy of the normalized
// eigenvalues. Eigenvalues below 1e-12 * lambda_max are clamped to zero.
SpectrumSummary erank(const Matrix& x);

struct PairValue {
  double value = 0.0;
  std::pair<Index, Index> pair{0, 1};
};

// max_{l1 != l2} |<x_l1, x_l2>|; ties resolve to the lowest (l1, l2).
PairValue max_abs_cosine(const PreppedMatrix& x);

// Lower bound on the maximum absolute cosine implied by eRank:
// sqrt((L / erank - 1) / (L - 1)), clamped to [0, 1].
double rep_bound(Index tokens, double erank);

double tv_distance(const Vector& p, const Vector& q);

// Softmax each row, then the minimum pairwise TV distance.
PairValue min_tv(const Matrix& logits);

// (sqrt(Voc)/2) * ||diag(g) W_u||_2 * sqrt(2 - 2 rep_bound(L, erank)).
double prob_bound(Index tokens, double erank, Index vocab,
                  double scaled_unembedding_spectral_norm);

// Largest singular value of diag(g_final) W_u.
double scaled_unembedding_norm(const dumps::UnembeddingBlock& u);

Vector rmsnorm(const Vector& x, const Vector& gain, double eps);

enum class FinalNorm {
  // x / sqrt(||x||^2 + eps) * g: unit rows map to x * g, the form the
  // distinguishability bound is stated for.
  kUnitL2,
  // Plain RMSNorm, which scales unit rows by sqrt(D).
  kRms,
};

// Row-wise final norm followed by W_u; returns L x Voc.
Matrix logits(const PreppedMatrix& x, const dumps::UnembeddingBlock& u,
              FinalNorm norm = FinalNorm::kUnitL2);

struct TokenEntropy {
  Vector per_token;
  double mean = 0.0;
};

TokenEntropy token_entropy(const Matrix& logits);

struct CollapseReport {
  bool is_rank1 = false;
  std::vector<int> sign_pattern;  // filled only when is_rank1
  double residual = 0.0;
  double sigma_ratio = 0.0;       // sigma_2 / sigma_1
};

// Rank-1 detection via sigma_2 / sigma_1 < tol. When rank 1, every row is
// compared against +/- the first row.
CollapseReport binary_collapse_check(const PreppedMatrix& x, double tol);

// Number of distinct rows, rows being equal when within tol in max norm.
Index distinct_rows(const Matrix& m, double tol);

struct AnalyzeOptions {
  FinalNorm final_norm = FinalNorm::kUnitL2;
  // Require the unembedding block (kCapability when absent).
  bool require_tv = false;
};

// Per-layer statistics, each the mean over sequences. Token-level fields are
// NaN when the dump has no unembedding block.
struct LayerAnalysis {
  std::size_t layer = 0;
  double erank = 0.0;
  double max_cos = 0.0;
  double rep_bound = 0.0;
  double min_tv = 0.0;
  double mean_entropy = 0.0;
  double prob_bound = 0.0;
};

struct DumpAnalysis {
  std::vector<LayerAnalysis> layers;
  // Pearson r of erank vs min_tv across layers; NaN when undefined.
  double erank_min_tv_correlation = 0.0;
  bool has_tv = false;
};

DumpAnalysis analyze_dump(const dumps::ActivationDump& dump,
                          const AnalyzeOptions& options = {});
std::string analysis_csv(const DumpAnalysis& analysis);

}  // namespace edistill::spectral

#endif  // EDISTILL_SPECTRAL_HPP_
