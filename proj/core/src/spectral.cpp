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

#include "edistill/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "edistill/error.hpp"

namespace edistill::spectral {

PreppedMatrix PreppedMatrix::from_unit_rows(Matrix rows) {
  require(rows.allFinite(), ErrorKind::kData, "non-finite representation");
  for (Index l = 0; l < rows.rows(); ++l) {
    require(std::abs(rows.row(l).norm() - 1.0) <= 1e-9, ErrorKind::kDomain,
            "row " + std::to_string(l) + " is not unit norm");
  }
  const double residual =
      rows.rows() ? rows.colwise().mean().cwiseAbs().maxCoeff() : 0.0;
  return PreppedMatrix(std::move(rows), residual);
}

PreppedMatrix preprocess(const Matrix& x, bool center) {
  require(x.rows() >= 1 && x.cols() >= 1, ErrorKind::kDomain,
          "preprocess: empty matrix");
  require(x.allFinite(), ErrorKind::kData, "preprocess: non-finite input");
  Matrix y = x;
  if (center) y.rowwise() -= x.colwise().mean();
  for (Index l = 0; l < y.rows(); ++l) {
    const double n = y.row(l).norm();
    if (n <= 1e-12) {
      fail(ErrorKind::kDegenerate,
           "row " + std::to_string(l) + " is zero after centering");
    }
    y.row(l) /= n;
  }
  const double residual = y.colwise().mean().cwiseAbs().maxCoeff();
  return PreppedMatrix(std::move(y), residual);
}

SpectrumSummary erank(const Matrix& x) {
  require(x.rows() >= 2, ErrorKind::kDomain, "erank needs L >= 2");
  require(x.allFinite(), ErrorKind::kData, "erank: non-finite input");
  const Index d = x.cols();
  const Vector s = singular_values(x);

  SpectrumSummary out;
  out.eigenvalues = Vector::Zero(d);
  for (Index j = 0; j < s.size() && j < d; ++j)
    out.eigenvalues(j) = s(j) * s(j) / double(x.rows());
  const double lmax = out.eigenvalues.size() ? out.eigenvalues(0) : 0.0;
  if (!(lmax > 0)) fail(ErrorKind::kDegenerate, "erank: all-zero matrix");
  for (Index j = 0; j < d; ++j) {
    if (out.eigenvalues(j) < 1e-12 * lmax) out.eigenvalues(j) = 0.0;
  }

  out.probabilities = out.eigenvalues / out.eigenvalues.sum();
  double entropy = 0.0, collision = 0.0;
  Index rank = 0;
  for (Index j = 0; j < d; ++j) {
    const double p = out.probabilities(j);
    if (p > 0) {
      entropy -= p * std::log(p);
      ++rank;
    }
    collision += p * p;
  }
  out.erank = std::exp(entropy);
  out.collision_probability = collision;
  out.numerical_rank = rank;
  return out;
}

PairValue max_abs_cosine(const PreppedMatrix& x) {
  const Index n = x.rows();
  require(n >= 2, ErrorKind::kDomain, "max_abs_cosine needs L >= 2");
  const Matrix gram = x.data() * x.data().transpose();
  PairValue best{-1.0, {0, 1}};
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      const double v = std::abs(gram(a, b));
      if (v > best.value) best = {v, {a, b}};
    }
  }
  best.value = std::min(best.value, 1.0);
  return best;
}

double rep_bound(Index tokens, double erank) {
  require(tokens >= 2, ErrorKind::kDomain, "rep_bound needs L >= 2");
  require(std::isfinite(erank) && erank >= 1.0 - 1e-12, ErrorKind::kDomain,
          "rep_bound needs erank >= 1");
  if (erank > double(tokens) * (1.0 + 1e-12)) {
    fail(ErrorKind::kDomain, "rep_bound: erank " + std::to_string(erank) +
                                 " exceeds L = " + std::to_string(tokens));
  }
  const double l = double(tokens);
  const double inner = (l / erank - 1.0) / (l - 1.0);
  return std::clamp(std::sqrt(std::max(inner, 0.0)), 0.0, 1.0);
}

double tv_distance(const Vector& p, const Vector& q) {
  require(p.size() == q.size(), ErrorKind::kDomain,
          "tv_distance: length mismatch");
  require(std::abs(p.sum() - 1.0) <= 1e-6 && std::abs(q.sum() - 1.0) <= 1e-6,
          ErrorKind::kDomain, "tv_distance: inputs must sum to 1");
  return 0.5 * (p - q).cwiseAbs().sum();
}

PairValue min_tv(const Matrix& logits) {
  const Index n = logits.rows();
  require(n >= 2, ErrorKind::kDomain, "min_tv needs L >= 2");
  const Matrix p = softmax_rows(logits);
  PairValue best{2.0, {0, 1}};
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      const double v = 0.5 * (p.row(a) - p.row(b)).cwiseAbs().sum();
      if (v < best.value) best = {v, {a, b}};
    }
  }
  return best;
}

double prob_bound(Index tokens, double erank, Index vocab,
                  double scaled_unembedding_spectral_norm) {
  require(vocab >= 1 && scaled_unembedding_spectral_norm >= 0,
          ErrorKind::kDomain, "prob_bound: invalid vocab or norm");
  const double rho = rep_bound(tokens, erank);
  return 0.5 * std::sqrt(double(vocab)) * scaled_unembedding_spectral_norm *
         std::sqrt(std::max(2.0 - 2.0 * rho, 0.0));
}

double scaled_unembedding_norm(const dumps::UnembeddingBlock& u) {
  const Matrix scaled =
      u.g_final.cast<double>().asDiagonal() * u.w_u.cast<double>();
  const Vector s = singular_values(scaled);
  return s.size() ? s(0) : 0.0;
}

Vector rmsnorm(const Vector& x, const Vector& gain, double eps) {
  require(x.size() == gain.size(), ErrorKind::kDomain,
          "rmsnorm: length mismatch");
  require(x.size() > 0, ErrorKind::kDomain, "rmsnorm: empty vector");
  const double ms = x.squaredNorm() / double(x.size());
  const double denom = std::sqrt(ms + eps);
  if (denom == 0) return Vector::Zero(x.size());
  return (x / denom).cwiseProduct(gain);
}

Matrix logits(const PreppedMatrix& x, const dumps::UnembeddingBlock& u,
              FinalNorm norm) {
  require(u.g_final.size() == x.cols() && u.w_u.rows() == x.cols(),
          ErrorKind::kDomain, "logits: unembedding does not match D");
  const Vector g = u.g_final.cast<double>();
  const double eps = u.epsilon;
  Matrix normed(x.rows(), x.cols());
  for (Index l = 0; l < x.rows(); ++l) {
    const Vector row = x.data().row(l).transpose();
    if (norm == FinalNorm::kRms) {
      normed.row(l) = rmsnorm(row, g, eps).transpose();
    } else {
      const double denom = std::sqrt(row.squaredNorm() + eps);
      normed.row(l) = (row / denom).cwiseProduct(g).transpose();
    }
  }
  return normed * u.w_u.cast<double>();
}

TokenEntropy token_entropy(const Matrix& logits) {
  require(logits.allFinite(), ErrorKind::kData, "token_entropy: non-finite");
  const Matrix p = softmax_rows(logits);
  TokenEntropy out;
  out.per_token.resize(p.rows());
  for (Index l = 0; l < p.rows(); ++l) {
    double h = 0.0;
    for (Index j = 0; j < p.cols(); ++j) {
      const double v = p(l, j);
      if (v > 0) h -= v * std::log(v);
    }
    out.per_token(l) = h;
  }
  out.mean = p.rows() ? out.per_token.mean() : 0.0;
  return out;
}

CollapseReport binary_collapse_check(const PreppedMatrix& x, double tol) {
  require(x.rows() >= 2, ErrorKind::kDomain,
          "binary_collapse_check needs L >= 2");
  const Vector s = singular_values(x.data());
  if (!(s(0) > 0)) fail(ErrorKind::kDegenerate, "sigma_1 is zero");
  CollapseReport r;
  r.sigma_ratio = s.size() > 1 ? s(1) / s(0) : 0.0;
  r.is_rank1 = r.sigma_ratio < tol;
  if (!r.is_rank1) return r;
  const auto first = x.data().row(0);
  r.sign_pattern.resize(std::size_t(x.rows()));
  for (Index l = 0; l < x.rows(); ++l) {
    const int sign = x.data().row(l).dot(first) >= 0 ? 1 : -1;
    r.sign_pattern[std::size_t(l)] = sign;
    r.residual =
        std::max(r.residual, (x.data().row(l) - double(sign) * first).norm());
  }
  return r;
}

Index distinct_rows(const Matrix& m, double tol) {
  std::vector<Index> reps;
  for (Index l = 0; l < m.rows(); ++l) {
    const bool seen = std::any_of(reps.begin(), reps.end(), [&](Index r) {
      return (m.row(l) - m.row(r)).cwiseAbs().maxCoeff() <= tol;
    });
    if (!seen) reps.push_back(l);
  }
  return Index(reps.size());
}

DumpAnalysis analyze_dump(const dumps::ActivationDump& dump,
                          const AnalyzeOptions& options) {
  const bool has_tv = dump.unembedding.has_value();
  if (options.require_tv && !has_tv) {
    fail(ErrorKind::kCapability,
         "min_tv requested but the dump has no unembedding block");
  }
  const std::size_t n_layers = dump.manifest.num_layers + 1;
  const double n_seq = double(dump.records.size());
  require(!dump.records.empty(), ErrorKind::kFormat, "dump has no sequences");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double u_norm = has_tv ? scaled_unembedding_norm(*dump.unembedding) : 0;

  DumpAnalysis out;
  out.has_tv = has_tv;
  for (std::size_t i = 0; i < n_layers; ++i) {
    LayerAnalysis a;
    a.layer = i;
    if (!has_tv) a.min_tv = a.mean_entropy = a.prob_bound = nan;
    for (std::size_t k = 0; k < dump.records.size(); ++k) {
      const PreppedMatrix x = preprocess(dump.layer(k, i));
      const double r = erank(x.data()).erank;
      a.erank += r / n_seq;
      a.max_cos += max_abs_cosine(x).value / n_seq;
      a.rep_bound += rep_bound(x.rows(), r) / n_seq;
      if (has_tv) {
        const Matrix z = logits(x, *dump.unembedding, options.final_norm);
        a.min_tv += min_tv(z).value / n_seq;
        a.mean_entropy += token_entropy(z).mean / n_seq;
        a.prob_bound +=
            prob_bound(x.rows(), r, z.cols(), u_norm) / n_seq;
      }
    }
    out.layers.push_back(a);
  }
  out.erank_min_tv_correlation = nan;
  if (has_tv && out.layers.size() >= 2) {
    std::vector<double> e, t;
    for (const LayerAnalysis& a : out.layers) {
      e.push_back(a.erank);
      t.push_back(a.min_tv);
    }
    out.erank_min_tv_correlation = pearson(e, t);
  }
  return out;
}

std::string analysis_csv(const DumpAnalysis& analysis) {
  std::ostringstream os;
  os << std::setprecision(17)
     << "layer,erank,min_tv,mean_entropy,max_cos,rep_bound,prob_bound\n";
  for (const LayerAnalysis& a : analysis.layers) {
    os << a.layer << ',' << a.erank << ',' << a.min_tv << ','
       << a.mean_entropy << ',' << a.max_cos << ',' << a.rep_bound << ','
       << a.prob_bound << "\n";
  }
  return os.str();
}

}  // namespace edistill::spectral
