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

#include "edistill/widthnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "byte_io.hpp"
#include "edistill/error.hpp"

namespace edistill::widthnet {
namespace {

void expect_shape(const Matrix& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::kDomain,
         std::string(name) + ": expected " + std::to_string(rows) + "x" +
             std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
             std::to_string(m.cols()));
  }
}

double silu(double v) { return v / (1.0 + std::exp(-v)); }

}  // namespace

void check_layer(const TeacherLayer& t) {
  const Index d = t.w_q.rows();
  const Index inner = t.num_heads * t.head_dim;
  require(d >= 1 && t.num_heads >= 1 && t.head_dim >= 1, ErrorKind::kDomain,
          "layer: D, heads and head_dim must be >= 1");
  expect_shape(t.w_q, d, inner, "W_q");
  expect_shape(t.w_k, d, inner, "W_k");
  expect_shape(t.w_v, d, inner, "W_v");
  expect_shape(t.w_o, inner, d, "W_o");
  const Index ff = t.w_gate.cols();
  expect_shape(t.w_gate, d, ff, "W_gate");
  expect_shape(t.w_up, d, ff, "W_up");
  expect_shape(t.w_down, ff, d, "W_down");
  require(t.g_a.size() == d && t.g_f.size() == d, ErrorKind::kDomain,
          "norm gains must have length D");
  require(t.g_a.allFinite() && t.g_f.allFinite(), ErrorKind::kData,
          "norm gains must be finite");
}

void check_layer(const WrappedLayer& w) {
  check_layer(w.teacher);
  const Index d = w.dim();
  const Index dp = w.o_a.rows();
  require(dp >= 1, ErrorKind::kDomain, "wrapped layer: D' must be >= 1");
  expect_shape(w.o_a, dp, d, "O_a");
  expect_shape(w.o_f, dp, d, "O_f");
  expect_shape(w.q_a, d, dp, "Q_a");
  expect_shape(w.q_f, d, dp, "Q_f");
  require(w.g_a.size() == dp && w.g_f.size() == dp, ErrorKind::kDomain,
          "student gains must have length D'");
}

Matrix rmsnorm_rows(const Matrix& x, const Vector& gain, double eps) {
  require(gain.size() == x.cols(), ErrorKind::kDomain,
          "rmsnorm: gain length does not match width");
  Matrix out(x.rows(), x.cols());
  const double width = double(x.cols());
  for (Index l = 0; l < x.rows(); ++l) {
    const double denom = std::sqrt(x.row(l).squaredNorm() / width + eps);
    if (denom == 0) {
      out.row(l).setZero();
    } else {
      out.row(l) = (x.row(l) / denom).cwiseProduct(gain.transpose());
    }
  }
  return out;
}

Matrix attention(const Matrix& normed, const TeacherLayer& t) {
  const Index len = normed.rows();
  const Index hd = t.head_dim;
  const Matrix q = normed * t.w_q;
  const Matrix k = normed * t.w_k;
  const Matrix v = normed * t.w_v;
  const double scale = 1.0 / std::sqrt(double(hd));
  Matrix heads(len, t.num_heads * hd);
  for (Index h = 0; h < t.num_heads; ++h) {
    const auto qh = q.middleCols(h * hd, hd);
    const auto kh = k.middleCols(h * hd, hd);
    const auto vh = v.middleCols(h * hd, hd);
    Matrix scores = scale * (qh * kh.transpose());
    for (Index i = 0; i < len; ++i) {
      // Causal: token i attends to 0..i.
      const double mx = scores.row(i).head(i + 1).maxCoeff();
      double sum = 0.0;
      for (Index j = 0; j <= i; ++j) {
        scores(i, j) = std::exp(scores(i, j) - mx);
        sum += scores(i, j);
      }
      for (Index j = 0; j <= i; ++j) scores(i, j) /= sum;
      for (Index j = i + 1; j < len; ++j) scores(i, j) = 0.0;
    }
    heads.middleCols(h * hd, hd) = scores * vh;
  }
  return heads * t.w_o;
}

Matrix ffn(const Matrix& normed, const TeacherLayer& t) {
  const Matrix gate = (normed * t.w_gate).unaryExpr(&silu);
  const Matrix up = normed * t.w_up;
  return gate.cwiseProduct(up) * t.w_down;
}

Matrix teacher_block(const Matrix& x, const TeacherLayer& t) {
  require(x.cols() == t.dim(), ErrorKind::kDomain,
          "teacher block: input width " + std::to_string(x.cols()) +
              " != D = " + std::to_string(t.dim()));
  const Matrix h = x + attention(rmsnorm_rows(x, t.g_a, t.eps), t);
  return h + ffn(rmsnorm_rows(h, t.g_f, t.eps), t);
}

Matrix wrapped_block(const Matrix& x, const WrappedLayer& w) {
  require(x.cols() == w.reduced_dim(), ErrorKind::kDomain,
          "wrapped block: input width " + std::to_string(x.cols()) +
              " != D' = " + std::to_string(w.reduced_dim()));
  const TeacherLayer& t = w.teacher;
  const Matrix h =
      x + attention(rmsnorm_rows(x, w.g_a, t.eps) * w.o_a, t) * w.q_a;
  return h + ffn(rmsnorm_rows(h, w.g_f, t.eps) * w.o_f, t) * w.q_f;
}

std::vector<Matrix> teacher_forward(const Matrix& x,
                                    std::span<const TeacherLayer> layers) {
  std::vector<Matrix> out;
  out.reserve(layers.size());
  Matrix cur = x;
  for (const TeacherLayer& t : layers) {
    check_layer(t);
    cur = teacher_block(cur, t);
    out.push_back(cur);
  }
  return out;
}

std::vector<Matrix> wrapped_forward(const Matrix& x,
                                    std::span<const WrappedLayer> layers) {
  std::vector<Matrix> out;
  out.reserve(layers.size());
  Matrix cur = x;
  for (const WrappedLayer& w : layers) {
    check_layer(w);
    cur = wrapped_block(cur, w);
    out.push_back(cur);
  }
  return out;
}

std::vector<Matrix> merged_forward(const Matrix& x,
                                   std::span<const MergedLayer> layers) {
  return teacher_forward(x, layers);
}

MergedLayer merge(const WrappedLayer& w) {
  check_layer(w);
  const TeacherLayer& t = w.teacher;
  MergedLayer m;
  m.w_q = w.o_a * t.w_q;
  m.w_k = w.o_a * t.w_k;
  m.w_v = w.o_a * t.w_v;
  m.w_o = t.w_o * w.q_a;
  m.w_gate = w.o_f * t.w_gate;
  m.w_up = w.o_f * t.w_up;
  m.w_down = t.w_down * w.q_f;
  m.g_a = w.g_a;
  m.g_f = w.g_f;
  m.num_heads = t.num_heads;
  m.head_dim = t.head_dim;
  m.eps = t.eps;
  return m;
}

WrappedLayer selection_wrap(const TeacherLayer& teacher,
                            const initlab::ChannelSelection& g,
                            StudentGains gains) {
  check_layer(teacher);
  const Index d = teacher.dim();
  const flowsim::ProjectionPair h = initlab::build_selection_pair(g, d);
  const Index dp = h.reduced_dim();
  WrappedLayer w;
  w.teacher = teacher;
  w.o_a = w.o_f = h.o;
  w.q_a = w.q_f = h.q;
  if (gains == StudentGains::kOnes) {
    w.g_a = w.g_f = Vector::Ones(dp);
  } else {
    const double s = std::sqrt(double(d) / double(dp));
    w.g_a = s * (h.q.transpose() * teacher.g_a);
    w.g_f = s * (h.q.transpose() * teacher.g_f);
  }
  return w;
}

StudentAdapters selection_adapters(const initlab::ChannelSelection& g,
                                   Index dim) {
  const flowsim::ProjectionPair h = initlab::build_selection_pair(g, dim);
  return {h.q, h.o};
}

TeacherLayer random_teacher_layer(Index dim, Index heads, Index head_dim,
                                  Index ffn_dim, Rng& rng, double scale) {
  TeacherLayer t;
  const Index inner = heads * head_dim;
  const double s_in = scale / std::sqrt(double(dim));
  t.w_q = gaussian_matrix(dim, inner, s_in, rng);
  t.w_k = gaussian_matrix(dim, inner, s_in, rng);
  t.w_v = gaussian_matrix(dim, inner, s_in, rng);
  t.w_o = gaussian_matrix(inner, dim, scale / std::sqrt(double(inner)), rng);
  t.w_gate = gaussian_matrix(dim, ffn_dim, s_in, rng);
  t.w_up = gaussian_matrix(dim, ffn_dim, s_in, rng);
  t.w_down = gaussian_matrix(ffn_dim, dim, scale / std::sqrt(double(ffn_dim)),
                             rng);
  t.g_a = Vector::Ones(dim) + gaussian_matrix(dim, 1, 0.1, rng).col(0);
  t.g_f = Vector::Ones(dim) + gaussian_matrix(dim, 1, 0.1, rng).col(0);
  t.num_heads = heads;
  t.head_dim = head_dim;
  t.eps = 1e-6;
  return t;
}

WrappedLayer random_wrapped_layer(const TeacherLayer& teacher, Index dprime,
                                  Rng& rng, double scale) {
  const Index d = teacher.dim();
  WrappedLayer w;
  w.teacher = teacher;
  w.o_a = gaussian_matrix(dprime, d, scale, rng);
  w.o_f = gaussian_matrix(dprime, d, scale, rng);
  w.q_a = gaussian_matrix(d, dprime, scale, rng);
  w.q_f = gaussian_matrix(d, dprime, scale, rng);
  w.g_a = Vector::Ones(dprime) + gaussian_matrix(dprime, 1, 0.1, rng).col(0);
  w.g_f = Vector::Ones(dprime) + gaussian_matrix(dprime, 1, 0.1, rng).col(0);
  return w;
}

double rep_align_loss(const Matrix& x_teacher, const Matrix& x_student) {
  require(x_teacher.rows() == x_student.rows() &&
              x_teacher.cols() == x_student.cols(),
          ErrorKind::kDomain, "rep_align_loss: shape mismatch");
  require(x_teacher.rows() >= 1, ErrorKind::kDomain,
          "rep_align_loss: empty input");
  return (x_teacher - x_student).squaredNorm() / double(x_teacher.rows());
}

namespace {

Vector log_softmax(const Eigen::Ref<const RowVector>& z) {
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return (z.array() - lse).matrix().transpose();
}

}  // namespace

double lm_loss(const Matrix& logits, std::span<const Index> targets) {
  require(Index(targets.size()) == logits.rows() && logits.rows() >= 1,
          ErrorKind::kDomain, "lm_loss: one target per position required");
  double total = 0.0;
  for (Index l = 0; l < logits.rows(); ++l) {
    const Index y = targets[std::size_t(l)];
    require(y >= 0 && y < logits.cols(), ErrorKind::kDomain,
            "lm_loss: target " + std::to_string(y) + " out of range");
    total -= log_softmax(logits.row(l))(y);
  }
  return total / double(logits.rows());
}

double kl_loss(const Matrix& teacher_logits, const Matrix& student_logits,
               double tau) {
  require(tau > 0 && std::isfinite(tau), ErrorKind::kDomain,
          "kl_loss: temperature must be positive");
  require(teacher_logits.rows() == student_logits.rows() &&
              teacher_logits.cols() == student_logits.cols() &&
              teacher_logits.rows() >= 1,
          ErrorKind::kDomain, "kl_loss: shape mismatch");
  double total = 0.0;
  for (Index l = 0; l < teacher_logits.rows(); ++l) {
    const Vector lp = log_softmax(teacher_logits.row(l) / tau);
    const Vector lq = log_softmax(student_logits.row(l) / tau);
    const Vector p = lp.array().exp();
    double kl = 0.0;
    for (Index j = 0; j < p.size(); ++j) {
      if (p(j) > 0) kl += p(j) * (lp(j) - lq(j));
    }
    total += std::max(kl, 0.0);
  }
  return total / double(teacher_logits.rows());
}

// ---------------------------------------------------------------------------
// Weights container.

namespace {

constexpr char kWeightsMagic[4] = {'E', 'D', 'A', 'W'};
constexpr std::uint32_t kWeightsVersion = 1;

void put(detail::Writer& w, const Matrix& m) {
  const MatrixF f = m.cast<float>();
  w.floats(f.data(), std::size_t(f.size()));
}

void put(detail::Writer& w, const Vector& v) {
  const VectorF f = v.cast<float>();
  w.floats(f.data(), std::size_t(f.size()));
}

Matrix get(detail::Reader& r, Index rows, Index cols, const std::string& ctx) {
  return r.matrix(rows, cols, ctx).cast<double>();
}

Vector get_vec(detail::Reader& r, Index n, const std::string& ctx) {
  return r.matrix(1, n, ctx).cast<double>().row(0).transpose();
}

}  // namespace

void write_weights(const WeightsFile& wf, std::ostream& out) {
  require(!wf.teacher.empty(), ErrorKind::kFormat, "weights: no layers");
  const TeacherLayer& t0 = wf.teacher.front();
  for (const TeacherLayer& t : wf.teacher) {
    check_layer(t);
    require(t.dim() == t0.dim() && t.num_heads == t0.num_heads &&
                t.head_dim == t0.head_dim && t.ffn_dim() == t0.ffn_dim() &&
                t.eps == t0.eps,
            ErrorKind::kFormat, "weights: layers must share hyperparameters");
  }
  detail::Writer w(out);
  w.bytes(kWeightsMagic, 4);
  w.u32(kWeightsVersion);
  w.u32(std::uint32_t(t0.dim()));
  w.u32(std::uint32_t(wf.teacher.size()));
  w.u32(std::uint32_t(t0.num_heads));
  w.u32(std::uint32_t(t0.head_dim));
  w.u32(std::uint32_t(t0.ffn_dim()));
  w.f32(float(t0.eps));
  for (const TeacherLayer& t : wf.teacher) {
    put(w, t.g_a);
    put(w, t.g_f);
    put(w, t.w_q);
    put(w, t.w_k);
    put(w, t.w_v);
    put(w, t.w_o);
    put(w, t.w_gate);
    put(w, t.w_up);
    put(w, t.w_down);
  }
  w.u8(wf.wrapped ? 1 : 0);
  if (wf.wrapped) {
    const auto& wl = *wf.wrapped;
    require(wl.size() == wf.teacher.size(), ErrorKind::kFormat,
            "weights: one wrapped layer per teacher layer required");
    const Index dp = wl.front().reduced_dim();
    w.u32(std::uint32_t(dp));
    for (const WrappedLayer& l : wl) {
      check_layer(l);
      require(l.reduced_dim() == dp, ErrorKind::kFormat,
              "weights: wrapped layers must share D'");
      put(w, l.g_a);
      put(w, l.g_f);
      put(w, l.o_a);
      put(w, l.o_f);
      put(w, l.q_a);
      put(w, l.q_f);
    }
  }
  out.flush();
}

WeightsFile read_weights(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kWeightsMagic, 4) != 0) {
    fail(ErrorKind::kUnsupportedFormat, "missing EDAW magic bytes");
  }
  detail::Reader r(in);
  const std::uint32_t version = r.u32("header");
  if (version != kWeightsVersion) {
    fail(ErrorKind::kUnsupportedFormat,
         "unsupported weights version " + std::to_string(version));
  }
  const Index d = r.u32("header");
  const std::uint32_t n = r.u32("header");
  const Index heads = r.u32("header");
  const Index hd = r.u32("header");
  const Index ff = r.u32("header");
  const double eps = r.f32("header");
  if (d < 1 || heads < 1 || hd < 1 || ff < 1 || n > 4096 || d > (1 << 16) ||
      heads * hd > (1 << 16) || ff > (1 << 18)) {
    fail(ErrorKind::kCorruptDump, "weights: implausible header");
  }
  const Index inner = heads * hd;
  WeightsFile wf;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string ctx = "layer " + std::to_string(i);
    TeacherLayer t;
    t.num_heads = heads;
    t.head_dim = hd;
    t.eps = eps;
    t.g_a = get_vec(r, d, ctx + " g_a");
    t.g_f = get_vec(r, d, ctx + " g_f");
    t.w_q = get(r, d, inner, ctx + " W_q");
    t.w_k = get(r, d, inner, ctx + " W_k");
    t.w_v = get(r, d, inner, ctx + " W_v");
    t.w_o = get(r, inner, d, ctx + " W_o");
    t.w_gate = get(r, d, ff, ctx + " W_gate");
    t.w_up = get(r, d, ff, ctx + " W_up");
    t.w_down = get(r, ff, d, ctx + " W_down");
    require(t.w_q.allFinite() && t.w_k.allFinite() && t.w_v.allFinite() &&
                t.w_o.allFinite() && t.w_gate.allFinite() &&
                t.w_up.allFinite() && t.w_down.allFinite(),
            ErrorKind::kData, ctx + ": non-finite weights");
    check_layer(t);
    wf.teacher.push_back(std::move(t));
  }
  if (r.u8("projection flag") != 0) {
    const Index dp = r.u32("projection header");
    if (dp < 1 || dp > d) fail(ErrorKind::kCorruptDump, "weights: bad D'");
    std::vector<WrappedLayer> wl;
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::string ctx = "projections " + std::to_string(i);
      WrappedLayer w;
      w.teacher = wf.teacher[i];
      w.g_a = get_vec(r, dp, ctx + " g_a");
      w.g_f = get_vec(r, dp, ctx + " g_f");
      w.o_a = get(r, dp, d, ctx + " O_a");
      w.o_f = get(r, dp, d, ctx + " O_f");
      w.q_a = get(r, d, dp, ctx + " Q_a");
      w.q_f = get(r, d, dp, ctx + " Q_f");
      check_layer(w);
      wl.push_back(std::move(w));
    }
    wf.wrapped = std::move(wl);
  }
  return wf;
}

void write_weights_file(const WeightsFile& w, const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + p.string());
  write_weights(w, out);
}

WeightsFile read_weights_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + p.string());
  return read_weights(in);
}

}  // namespace edistill::widthnet
