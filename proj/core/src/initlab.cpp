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

#include "edistill/initlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "edistill/error.hpp"

namespace edistill::initlab {
namespace {

// Accumulates sum_k s^2 per (stream, channel), then averages the root over
// streams.
class MeanOfL2 {
 public:
  MeanOfL2(std::size_t streams, Index dim)
      : sums_(Matrix::Zero(Index(streams), dim)) {}

  void add(std::size_t stream, const Vector& s) {
    sums_.row(Index(stream)) += s.cwiseAbs2().transpose();
  }

  Vector finish() const {
    return sums_.cwiseSqrt().colwise().mean().transpose();
  }

 private:
  Matrix sums_;
};

Vector mean_abs_columns(const MatrixF& x) {
  return x.cast<double>().cwiseAbs().colwise().mean().transpose();
}

void require_sequences(const dumps::ActivationDump& dump) {
  require(!dump.records.empty(), ErrorKind::kDomain,
          "importance: dump has no sequences");
  require(dump.manifest.hidden_dim >= 1, ErrorKind::kDomain,
          "importance: dump has D = 0");
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kMeanAbs: return "mean_abs";
    case Strategy::kPostnorm: return "postnorm";
    case Strategy::kQrPivot: return "qr_pivot";
  }
  return "mean_abs";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "mean_abs") return Strategy::kMeanAbs;
  if (name == "postnorm") return Strategy::kPostnorm;
  if (name == "qr_pivot") return Strategy::kQrPivot;
  fail(ErrorKind::kDomain, "unknown importance strategy '" + name + "'");
}

ImportanceReport importance_mean_abs(const dumps::ActivationDump& dump) {
  require_sequences(dump);
  const std::size_t layers = dump.manifest.num_layers + 1;
  MeanOfL2 acc(layers, dump.manifest.hidden_dim);
  for (const dumps::SequenceRecord& rec : dump.records) {
    for (std::size_t i = 0; i < layers; ++i)
      acc.add(i, mean_abs_columns(rec.layers.at(i)));
  }
  return {acc.finish(), Strategy::kMeanAbs, layers, dump.records.size()};
}

ImportanceReport importance_postnorm(const dumps::ActivationDump& dump) {
  require_sequences(dump);
  const std::size_t n = dump.manifest.num_layers;
  if (!dump.manifest.has_postnorm || n == 0) {
    fail(ErrorKind::kCapability,
         "postnorm strategy needs a dump with post-norm streams");
  }
  MeanOfL2 acc(2 * n, dump.manifest.hidden_dim);
  for (const dumps::SequenceRecord& rec : dump.records) {
    for (std::size_t i = 0; i < n; ++i) {
      acc.add(2 * i, mean_abs_columns(rec.attn_norm.at(i)));
      acc.add(2 * i + 1, mean_abs_columns(rec.ffn_norm.at(i)));
    }
  }
  return {acc.finish(), Strategy::kPostnorm, 2 * n, dump.records.size()};
}

PivotedQr pivoted_qr_scores(const Matrix& a) {
  require(a.cols() >= 1 && a.rows() >= 1, ErrorKind::kDomain,
          "pivoted QR of an empty matrix");
  if (!(a.cwiseAbs().maxCoeff() > 0)) {
    fail(ErrorKind::kDegenerate, "pivoted QR: layer matrix has rank 0");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  const auto& perm = qr.colsPermutation().indices();
  const Matrix& r = qr.matrixR();
  PivotedQr out;
  out.rank = qr.rank();
  out.scores = Vector::Zero(a.cols());
  const Index steps = std::min(a.rows(), a.cols());
  out.pivot_order.reserve(std::size_t(steps));
  for (Index t = 0; t < steps; ++t) {
    const Index col = perm(t);
    out.pivot_order.push_back(col);
    if (t < out.rank) out.scores(col) = std::abs(r(t, t));
  }
  return out;
}

ImportanceReport importance_qr(const dumps::ActivationDump& dump) {
  require_sequences(dump);
  const std::size_t layers = dump.manifest.num_layers + 1;
  const Index d = dump.manifest.hidden_dim;
  Index total = 0;
  for (const auto& rec : dump.records) total += rec.seq_len();
  MeanOfL2 acc(layers, d);
  for (std::size_t i = 0; i < layers; ++i) {
    Matrix stacked(total, d);
    Index row = 0;
    for (const auto& rec : dump.records) {
      stacked.middleRows(row, rec.seq_len()) = rec.layers.at(i).cast<double>();
      row += rec.seq_len();
    }
    acc.add(i, pivoted_qr_scores(stacked).scores);
  }
  return {acc.finish(), Strategy::kQrPivot, layers, dump.records.size()};
}

ImportanceReport importance(const dumps::ActivationDump& dump, Strategy s) {
  switch (s) {
    case Strategy::kMeanAbs: return importance_mean_abs(dump);
    case Strategy::kPostnorm: return importance_postnorm(dump);
    case Strategy::kQrPivot: return importance_qr(dump);
  }
  return importance_mean_abs(dump);
}

ChannelSelection select_topk(const ImportanceReport& report, Index dprime) {
  const Index d = report.scores.size();
  require(dprime >= 1 && dprime < d, ErrorKind::kDomain,
          "select_topk needs 1 <= D' < D (D' = " + std::to_string(dprime) +
              ", D = " + std::to_string(d) + ")");
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return report.scores(a) > report.scores(b);
  });
  ChannelSelection g;
  g.indices.assign(order.begin(), order.begin() + dprime);
  std::sort(g.indices.begin(), g.indices.end());
  g.source = report.strategy;
  return g;
}

ProjectionPair build_selection_pair(const ChannelSelection& g, Index dim) {
  const Index dp = Index(g.indices.size());
  require(dp >= 1 && dp <= dim, ErrorKind::kDomain,
          "selection size must be in [1, D]");
  Matrix h = Matrix::Zero(dim, dp);
  for (Index j = 0; j < dp; ++j) {
    const Index i = g.indices[std::size_t(j)];
    require(i >= 0 && i < dim, ErrorKind::kDomain,
            "channel index " + std::to_string(i) + " out of range for D = " +
                std::to_string(dim));
    require(j == 0 || i > g.indices[std::size_t(j - 1)], ErrorKind::kDomain,
            "channel indices must be strictly increasing");
    h(i, j) = 1.0;
  }
  return {h, h.transpose()};
}

std::string InitSpec::name() const {
  if (std::holds_alternative<ChannelSelect>(kind)) return "channel_select";
  if (std::holds_alternative<Orthogonal>(kind)) return "orthogonal";
  return "gaussian";
}

ProjectionPair build_random_pair(const InitSpec& spec, Index dim,
                                 Index dprime) {
  require(dprime >= 1 && dprime <= dim, ErrorKind::kDomain,
          "build_random_pair needs 1 <= D' <= D");
  if (const auto* sel = std::get_if<ChannelSelect>(&spec.kind)) {
    require(Index(sel->selection.indices.size()) == dprime, ErrorKind::kDomain,
            "selection size differs from D'");
    return build_selection_pair(sel->selection, dim);
  }
  Rng rng(spec.seed);
  if (const auto* g = std::get_if<Gaussian>(&spec.kind)) {
    require(g->stddev > 0, ErrorKind::kDomain, "gaussian std must be > 0");
    Matrix q = gaussian_matrix(dim, dprime, g->stddev, rng);
    Matrix o = gaussian_matrix(dprime, dim, g->stddev, rng);
    return {std::move(q), std::move(o)};
  }
  Matrix q = random_orthonormal(dim, dprime, rng);
  Matrix o = q.transpose();
  return {std::move(q), std::move(o)};
}

ProjectionPair build_pair(const InitSpec& spec, Index dim, Index dprime) {
  return build_random_pair(spec, dim, dprime);
}

double overlap_ratio(const ChannelSelection& a, const ChannelSelection& b) {
  require(a.indices.size() == b.indices.size() && !a.indices.empty(),
          ErrorKind::kDomain, "overlap_ratio: selections differ in size");
  std::vector<Index> sa = a.indices, sb = b.indices, common;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                        std::back_inserter(common));
  return double(common.size()) / double(a.indices.size());
}

SplitCheck split_half_overlap(const dumps::ActivationDump& dump,
                              Strategy strategy, Index dprime) {
  const std::size_t k = dump.records.size();
  require(k >= 2, ErrorKind::kDomain, "split check needs at least 2 sequences");
  const std::size_t half = k / 2;
  SplitCheck out;
  out.first = select_topk(
      importance(dumps::slice_sequences(dump, 0, half), strategy), dprime);
  out.second = select_topk(
      importance(dumps::slice_sequences(dump, half, k), strategy), dprime);
  out.overlap = overlap_ratio(out.first, out.second);
  return out;
}

std::string report_json(const ImportanceReport& report,
                        const ChannelSelection* selection) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(report.strategy);
  j["num_layers_used"] = report.num_layers_used;
  j["num_sequences_used"] = report.num_sequences_used;
  j["scores"] = std::vector<double>(report.scores.data(),
                                    report.scores.data() + report.scores.size());
  if (selection) j["indices"] = selection->indices;
  return j.dump(2) + "\n";
}

}  // namespace edistill::initlab
