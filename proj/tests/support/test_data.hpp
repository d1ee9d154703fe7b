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

// Data builders shared by the unit and acceptance suites.

#ifndef EDISTILL_TESTS_SUPPORT_TEST_DATA_HPP_
#define EDISTILL_TESTS_SUPPORT_TEST_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "edistill/dumps.hpp"
#include "edistill/flowsim.hpp"
#include "edistill/linalg.hpp"

namespace edistill::testing {

// lambda_j = (j+1)^-decay, j < dim.
inline std::vector<double> power_law(Index dim, double decay) {
  std::vector<double> s(static_cast<std::size_t>(dim));
  for (Index j = 0; j < dim; ++j) s[std::size_t(j)] = std::pow(j + 1.0, -decay);
  return s;
}

inline double spectrum_erank(const std::vector<double>& s) {
  const double total = std::accumulate(s.begin(), s.end(), 0.0);
  double h = 0.0;
  for (double v : s) {
    if (v > 0) h -= (v / total) * std::log(v / total);
  }
  return std::exp(h);
}

// Power-law exponent whose spectrum has the requested eRank (bisection).
inline double decay_for_erank(Index dim, double target) {
  double lo = 0.0, hi = 20.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (spectrum_erank(power_law(dim, mid)) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Channel-aligned activations: column j has variance spectrum[pi(j)] for a
// random permutation pi, columns are exactly uncorrelated (L >= D).
inline Matrix channel_aligned(Index rows, const std::vector<double>& spectrum,
                              std::uint64_t seed) {
  Rng rng(seed);
  const Index dim = Index(spectrum.size());
  Matrix x = std::sqrt(double(rows)) * random_orthonormal(rows, dim, rng);
  std::vector<Index> perm(spectrum.size());
  std::iota(perm.begin(), perm.end(), Index(0));
  std::shuffle(perm.begin(), perm.end(), rng);
  for (Index j = 0; j < dim; ++j)
    x.col(j) *= std::sqrt(spectrum[std::size_t(perm[std::size_t(j)])]);
  return x;
}

// Proxy-experiment activations (L x 128 at the defaults): a channel-aligned
// informative block of `block` channels with a power-law spectrum, a flat
// low-variance tail at `floor`, and a shared offset of `offset` times the
// row RMS norm along a random direction (hidden states are not centered).
inline Matrix proxy_activations(Index rows, std::uint64_t seed,
                                Index dim = 128, Index block = 44,
                                double decay = 0.4, double floor = 1e-3,
                                double offset = 0.25) {
  std::vector<double> spec(static_cast<std::size_t>(dim), floor);
  for (Index j = 0; j < block && j < dim; ++j)
    spec[std::size_t(j)] = std::pow(j + 1.0, -decay);
  Matrix x = channel_aligned(rows, spec, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Vector mu = gaussian_matrix(dim, 1, 1.0, rng).col(0);
  mu *= offset * std::sqrt(x.squaredNorm() / double(rows)) / mu.norm();
  x.rowwise() += mu.transpose();
  return x;
}

// Wraps one L x D matrix as a single-sequence, single-layer dump.
inline dumps::ActivationDump single_layer_dump(const Matrix& x) {
  dumps::ActivationDump d;
  d.manifest.hidden_dim = std::uint32_t(x.cols());
  d.manifest.num_layers = 0;
  d.manifest.num_sequences = 1;
  dumps::SequenceRecord r;
  r.layers.push_back(x.cast<float>());
  d.records.push_back(std::move(r));
  return d;
}

// Q random, O = Q^T: exactly balanced.
inline flowsim::ProjectionPair balanced_pair(Index dim, Index dprime,
                                             double stddev, Rng& rng) {
  flowsim::ProjectionPair p;
  p.q = gaussian_matrix(dim, dprime, stddev, rng);
  p.o = p.q.transpose();
  return p;
}

}  // namespace edistill::testing

#endif  // EDISTILL_TESTS_SUPPORT_TEST_DATA_HPP_
