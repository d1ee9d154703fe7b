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

// Shared matrix aliases and small numeric helpers used by every module.

#ifndef EDISTILL_LINALG_HPP_
#define EDISTILL_LINALG_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace edistill {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Storage precision for on-disk activations.
using MatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;

// A token-representation matrix, L tokens by D channels.
using RepMatrix = Matrix;

using Rng = std::mt19937_64;

bool all_finite(const Matrix& m);

// Singular values in descending order.
Vector singular_values(const Matrix& m);

// Matrix with i.i.d. N(0, stddev^2) entries.
Matrix gaussian_matrix(Index rows, Index cols, double stddev, Rng& rng);

// rows x cols matrix with orthonormal columns (rows >= cols), Haar-distributed
// via QR of a Gaussian matrix with the sign of R's diagonal folded into Q.
Matrix random_orthonormal(Index rows, Index cols, Rng& rng);

// Pearson correlation; returns NaN when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

}  // namespace edistill

#endif  // EDISTILL_LINALG_HPP_
