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

#include "edistill/linalg.hpp"

#include <cmath>
#include <limits>

#include "edistill/error.hpp"

namespace edistill {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kUnsupportedFormat: return "unsupported format";
    case ErrorKind::kCorruptDump: return "corrupt dump";
    case ErrorKind::kDomain: return "domain error";
    case ErrorKind::kDegenerate: return "degenerate input";
    case ErrorKind::kCapability: return "capability error";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kUndefinedCorrelation: return "undefined correlation";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector();
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues();
}

Matrix gaussian_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  // Fill row-major so the stream of draws does not depend on Eigen's layout.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Matrix random_orthonormal(Index rows, Index cols, Rng& rng) {
  require(rows >= cols, ErrorKind::kDomain,
          "random_orthonormal needs rows >= cols");
  Matrix g = gaussian_matrix(rows, cols, 1.0, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Index j = 0; j < cols; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kDomain,
          "pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index l = 0; l < logits.rows(); ++l) {
    const double mx = logits.row(l).maxCoeff();
    p.row(l) = (logits.row(l).array() - mx).exp().matrix();
    p.row(l) /= p.row(l).sum();
  }
  return p;
}

}  // namespace edistill
