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

// Toy pre-norm transformer stack (RMSNorm, causal multi-head attention,
// SiLU-gated FFN) and its width-reduced student:
//
//   H' = X' + MHSA(Norm'_a(X') O_a) Q_a
//   Y' = H' + FFN(Norm'_f(H') O_f) Q_f
//
// with frozen teacher modules, plus merging of the projections into the
// teacher weights so the student runs natively at width D'.

#ifndef EDISTILL_WIDTHNET_HPP_
#define EDISTILL_WIDTHNET_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "edistill/initlab.hpp"
#include "edistill/linalg.hpp"

namespace edistill::widthnet {

struct TeacherLayer {
  Matrix w_q, w_k, w_v;  // D x (heads * head_dim)
  Matrix w_o;            // (heads * head_dim) x D
  Matrix w_gate, w_up;   // D x d_ff
  Matrix w_down;         // d_ff x D
  Vector g_a, g_f;       // RMSNorm gains, length D
  Index num_heads = 1;
  Index head_dim = 1;
  double eps = 1e-6;

  Index dim() const { return w_q.rows(); }
  Index ffn_dim() const { return w_gate.cols(); }
};

// A merged student block is an ordinary pre-norm block at width D'.
using MergedLayer = TeacherLayer;

struct WrappedLayer {
  TeacherLayer teacher;  // frozen
  Vector g_a, g_f;       // student gains, length D'
  Matrix o_a, o_f;       // D' x D (up-projections, after the student norm)
  Matrix q_a, q_f;       // D x D' (down-projections, after each module)

  Index dim() const { return teacher.dim(); }
  Index reduced_dim() const { return o_a.rows(); }
};

// Throws kDomain on inconsistent shapes.
void check_layer(const TeacherLayer& layer);
void check_layer(const WrappedLayer& layer);

// Causal multi-head self-attention with scale 1/sqrt(head_dim) on an already
// normalized input; the input width is taken from w_q.
Matrix attention(const Matrix& normed, const TeacherLayer& layer);
Matrix ffn(const Matrix& normed, const TeacherLayer& layer);
Matrix rmsnorm_rows(const Matrix& x, const Vector& gain, double eps);

Matrix teacher_block(const Matrix& x, const TeacherLayer& layer);
Matrix wrapped_block(const Matrix& x, const WrappedLayer& layer);

// Output of every layer (not including the input).
std::vector<Matrix> teacher_forward(const Matrix& x,
                                    std::span<const TeacherLayer> layers);
std::vector<Matrix> wrapped_forward(const Matrix& x,
                                    std::span<const WrappedLayer> layers);
std::vector<Matrix> merged_forward(const Matrix& x,
                                   std::span<const MergedLayer> layers);

// O absorbed into the input side of W_q/W_k/W_v/W_gate/W_up, Q into the
// output side of W_o/W_down; gains become the student gains.
MergedLayer merge(const WrappedLayer& w);

enum class StudentGains {
  kOnes,     // re-initialized norm
  kMatched,  // g[G] * sqrt(D / D'), so a G-supported input normalizes exactly
             // as it would in the teacher (at eps = 0)
};

// Q = H, O = H^T for both sublayers.
WrappedLayer selection_wrap(const TeacherLayer& teacher,
                            const initlab::ChannelSelection& g,
                            StudentGains gains = StudentGains::kOnes);

// Embedding / unembedding adapters: the teacher embedding output is mapped to
// the student width by Q_emb (D x D'); the final student state is lifted back
// by O_unemb (D' x D) before the teacher's final norm and W_u.
struct StudentAdapters {
  Matrix q_emb;
  Matrix o_unemb;
};
StudentAdapters selection_adapters(const initlab::ChannelSelection& g,
                                   Index dim);

TeacherLayer random_teacher_layer(Index dim, Index heads, Index head_dim,
                                  Index ffn_dim, Rng& rng, double scale = 0.3);
WrappedLayer random_wrapped_layer(const TeacherLayer& teacher, Index dprime,
                                  Rng& rng, double scale = 0.5);

// (1/L) ||X_t - X_s||_F^2
double rep_align_loss(const Matrix& x_teacher, const Matrix& x_student);
// Mean negative log-likelihood of targets under softmax(logits).
double lm_loss(const Matrix& logits, std::span<const Index> targets);
// (1/L) sum_l KL(softmax(Z_l / tau) || softmax(Z'_l / tau)), teacher first.
double kl_loss(const Matrix& teacher_logits, const Matrix& student_logits,
               double tau);

// Weights container: the dump container's conventions (little-endian, f32,
// row-major) with magic "EDAW":
//   "EDAW" | u32 version=1 | u32 D | u32 N | u32 heads | u32 head_dim
//   | u32 d_ff | f32 eps | per layer: g_a, g_f, W_q, W_k, W_v, W_o, W_gate,
//   W_up, W_down | u8 has_projections | if set: u32 D', per layer:
//   g'_a, g'_f, O_a, O_f, Q_a, Q_f
struct WeightsFile {
  std::vector<TeacherLayer> teacher;
  std::optional<std::vector<WrappedLayer>> wrapped;  // shares the teachers
};

void write_weights(const WeightsFile& w, std::ostream& out);
WeightsFile read_weights(std::istream& in);
void write_weights_file(const WeightsFile& w, const std::filesystem::path& p);
WeightsFile read_weights_file(const std::filesystem::path& p);

}  // namespace edistill::widthnet

#endif  // EDISTILL_WIDTHNET_HPP_
