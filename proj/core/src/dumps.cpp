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

#include "edistill/dumps.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "edistill/error.hpp"
#include "edistill/spectral.hpp"
#include "byte_io.hpp"

namespace edistill::dumps {
namespace {

using detail::Reader;
using detail::Writer;

bool bitwise_equal(const MatrixF& a, const MatrixF& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}

bool bitwise_equal(const std::vector<MatrixF>& a,
                   const std::vector<MatrixF>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bitwise_equal(a[i], b[i])) return false;
  return true;
}

std::string where(std::size_t k, const char* stream, std::size_t layer) {
  std::ostringstream os;
  os << "sequence " << k << ", " << stream << " layer " << layer;
  return os.str();
}

void check_matrix(const MatrixF& m, Index rows, Index cols,
                  const std::string& ctx) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << ctx << ": expected " << rows << "x" << cols << ", got " << m.rows()
       << "x" << m.cols();
    fail(ErrorKind::kFormat, os.str());
  }
  if (!m.allFinite()) fail(ErrorKind::kData, ctx + ": non-finite value");
}

// Upper bound on a single allocation driven by untrusted header fields.
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 28;

void check_size(std::uint64_t rows, std::uint64_t cols,
                const std::string& ctx) {
  if (cols != 0 && rows > kMaxElements / cols) {
    fail(ErrorKind::kCorruptDump, ctx + ": implausible matrix size");
  }
}

}  // namespace

bool SequenceRecord::operator==(const SequenceRecord& other) const {
  return bitwise_equal(layers, other.layers) &&
         bitwise_equal(attn_norm, other.attn_norm) &&
         bitwise_equal(ffn_norm, other.ffn_norm);
}

bool UnembeddingBlock::operator==(const UnembeddingBlock& other) const {
  return g_final.size() == other.g_final.size() &&
         (g_final.size() == 0 ||
          std::memcmp(g_final.data(), other.g_final.data(),
                      sizeof(float) * g_final.size()) == 0) &&
         std::bit_cast<std::uint32_t>(epsilon) ==
             std::bit_cast<std::uint32_t>(other.epsilon) &&
         bitwise_equal(w_u, other.w_u);
}

Matrix ActivationDump::layer(std::size_t k, std::size_t i) const {
  return records.at(k).layers.at(i).cast<double>();
}

void validate(const DumpManifest& m, std::span<const SequenceRecord> records,
              const std::optional<UnembeddingBlock>& unembedding) {
  require(m.format_version == kFormatVersion, ErrorKind::kUnsupportedFormat,
          "unsupported dump version " + std::to_string(m.format_version));
  require(m.hidden_dim >= 1, ErrorKind::kFormat, "hidden_dim must be >= 1");
  require(m.num_sequences >= 1, ErrorKind::kFormat,
          "num_sequences must be >= 1");
  require(records.size() == m.num_sequences, ErrorKind::kFormat,
          "manifest declares " + std::to_string(m.num_sequences) +
              " sequences, got " + std::to_string(records.size()));
  if (m.has_unembedding) {
    require(m.vocab_size >= 2, ErrorKind::kFormat,
            "has_unembedding requires vocab_size >= 2");
    require(unembedding.has_value(), ErrorKind::kFormat,
            "has_unembedding set but no unembedding block given");
  } else {
    require(!unembedding.has_value(), ErrorKind::kFormat,
            "unembedding block given but has_unembedding is false");
  }

  const Index d = m.hidden_dim;
  const std::size_t n = m.num_layers;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const SequenceRecord& r = records[k];
    require(r.layers.size() == n + 1, ErrorKind::kFormat,
            "sequence " + std::to_string(k) + ": expected " +
                std::to_string(n + 1) + " layer matrices, got " +
                std::to_string(r.layers.size()));
    const Index len = r.seq_len();
    require(len >= 1, ErrorKind::kFormat,
            "sequence " + std::to_string(k) + " is empty");
    for (std::size_t i = 0; i <= n; ++i)
      check_matrix(r.layers[i], len, d, where(k, "hidden", i));
    if (m.has_postnorm) {
      require(r.attn_norm.size() == n && r.ffn_norm.size() == n,
              ErrorKind::kFormat,
              "sequence " + std::to_string(k) +
                  ": post-norm streams must have N matrices each");
      for (std::size_t i = 0; i < n; ++i) {
        check_matrix(r.attn_norm[i], len, d, where(k, "attn-norm", i + 1));
        check_matrix(r.ffn_norm[i], len, d, where(k, "ffn-norm", i + 1));
      }
    } else {
      require(r.attn_norm.empty() && r.ffn_norm.empty(), ErrorKind::kFormat,
              "sequence " + std::to_string(k) +
                  " carries post-norm streams but has_postnorm is false");
    }
  }

  if (unembedding) {
    const UnembeddingBlock& u = *unembedding;
    require(u.g_final.size() == d, ErrorKind::kFormat,
            "g_final length must equal D");
    require(u.g_final.allFinite(), ErrorKind::kData, "g_final: non-finite");
    require(std::isfinite(u.epsilon) && u.epsilon > 0, ErrorKind::kData,
            "unembedding epsilon must be finite and positive");
    check_matrix(u.w_u, d, m.vocab_size, "unembedding W_u");
  }
}

void validate(const ActivationDump& dump) {
  validate(dump.manifest, dump.records, dump.unembedding);
}

void write_dump(const DumpManifest& m, std::span<const SequenceRecord> records,
                const std::optional<UnembeddingBlock>& unembedding,
                std::ostream& out) {
  validate(m, records, unembedding);
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u32(m.format_version);
  w.u32(m.hidden_dim);
  w.u32(m.num_layers);
  w.u32(m.num_sequences);
  w.u8(m.has_postnorm ? 1 : 0);
  w.u8(m.has_unembedding ? 1 : 0);
  w.u32(m.vocab_size);
  w.u32(static_cast<std::uint32_t>(m.model_label.size()));
  w.bytes(m.model_label.data(), m.model_label.size());
  for (const SequenceRecord& r : records) {
    w.u32(static_cast<std::uint32_t>(r.seq_len()));
    for (const MatrixF& x : r.layers) w.floats(x.data(), x.size());
    if (m.has_postnorm) {
      for (std::size_t i = 0; i < r.attn_norm.size(); ++i) {
        w.floats(r.attn_norm[i].data(), r.attn_norm[i].size());
        w.floats(r.ffn_norm[i].data(), r.ffn_norm[i].size());
      }
    }
  }
  if (unembedding) {
    w.floats(unembedding->g_final.data(), unembedding->g_final.size());
    w.f32(unembedding->epsilon);
    w.floats(unembedding->w_u.data(), unembedding->w_u.size());
  }
  out.flush();
}

void write_dump(const ActivationDump& dump, std::ostream& out) {
  write_dump(dump.manifest, dump.records, dump.unembedding, out);
}

ActivationDump read_dump(std::istream& in) {
  Reader r(in);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorKind::kUnsupportedFormat, "missing EDAD magic bytes");
  }
  ActivationDump dump;
  DumpManifest& m = dump.manifest;
  m.format_version = r.u32("header");
  if (m.format_version != kFormatVersion) {
    fail(ErrorKind::kUnsupportedFormat,
         "unsupported dump version " + std::to_string(m.format_version));
  }
  m.hidden_dim = r.u32("header");
  m.num_layers = r.u32("header");
  m.num_sequences = r.u32("header");
  m.has_postnorm = r.u8("header") != 0;
  m.has_unembedding = r.u8("header") != 0;
  m.vocab_size = r.u32("header");
  const std::uint32_t label_len = r.u32("header");
  if (label_len > (1u << 20)) fail(ErrorKind::kCorruptDump, "label too long");
  m.model_label.resize(label_len);
  r.bytes(m.model_label.data(), label_len, "model label");

  const Index d = m.hidden_dim;
  const std::size_t n = m.num_layers;
  if (m.num_sequences > (1u << 24) || n > (1u << 16)) {
    fail(ErrorKind::kCorruptDump, "implausible header counts");
  }
  dump.records.reserve(m.num_sequences);
  for (std::size_t k = 0; k < m.num_sequences; ++k) {
    SequenceRecord rec;
    const Index len = r.u32("sequence " + std::to_string(k) + " length");
    check_size(std::uint64_t(len), std::uint64_t(d), where(k, "hidden", 0));
    rec.layers.reserve(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
      rec.layers.push_back(r.matrix(len, d, where(k, "hidden", i)));
    if (m.has_postnorm) {
      for (std::size_t i = 1; i <= n; ++i) {
        rec.attn_norm.push_back(r.matrix(len, d, where(k, "attn-norm", i)));
        rec.ffn_norm.push_back(r.matrix(len, d, where(k, "ffn-norm", i)));
      }
    }
    dump.records.push_back(std::move(rec));
  }
  if (m.has_unembedding) {
    check_size(std::uint64_t(d), m.vocab_size, "unembedding");
    UnembeddingBlock u;
    u.g_final.resize(d);
    r.floats(u.g_final.data(), std::size_t(d), "unembedding g_final");
    u.epsilon = r.f32("unembedding epsilon");
    u.w_u = r.matrix(d, m.vocab_size, "unembedding W_u");
    dump.unembedding = std::move(u);
  }
  validate(dump);
  return dump;
}

std::string manifest_json(const DumpManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "EDAD";
  j["format_version"] = m.format_version;
  j["hidden_dim"] = m.hidden_dim;
  j["num_layers"] = m.num_layers;
  j["num_sequences"] = m.num_sequences;
  j["has_postnorm"] = m.has_postnorm;
  j["has_unembedding"] = m.has_unembedding;
  j["vocab_size"] = m.vocab_size;
  j["model_label"] = m.model_label;
  j["creation_metadata"] = m.creation_metadata;
  return j.dump(2) + "\n";
}

void write_dump_file(const ActivationDump& dump,
                     const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot open " + path.string());
    write_dump(dump, out);
  }
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) fail(ErrorKind::kIo, "cannot open sidecar for " + path.string());
  side << manifest_json(dump.manifest);
}

ActivationDump read_dump_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  ActivationDump dump = read_dump(in);
  std::ifstream side(path.string() + ".json");
  if (side) {
    try {
      const auto j = nlohmann::json::parse(side);
      if (j.contains("creation_metadata") &&
          j["creation_metadata"].is_string()) {
        dump.manifest.creation_metadata = j["creation_metadata"];
      }
    } catch (const nlohmann::json::exception&) {
      // The sidecar is informational; a malformed one is ignored.
    }
  }
  return dump;
}

namespace {

RepMatrix synth_in_frame(Index rows, std::span<const double> spectrum,
                         const Matrix& frame,
                         const std::optional<Vector>& cone_center, Rng& rng) {
  const Index dim = frame.rows();
  Vector scale = Vector::Zero(dim);
  for (std::size_t j = 0; j < spectrum.size(); ++j) {
    require(spectrum[j] >= 0 && std::isfinite(spectrum[j]), ErrorKind::kDomain,
            "target spectrum entries must be finite and nonnegative");
    scale(Index(j)) = std::sqrt(spectrum[j]);
  }
  Matrix coeff;
  if (rows >= dim) {
    coeff = std::sqrt(double(rows)) * random_orthonormal(rows, dim, rng);
  } else {
    coeff = gaussian_matrix(rows, dim, 1.0, rng);
  }
  RepMatrix x = coeff * scale.asDiagonal() * frame.transpose();
  if (cone_center) {
    require(cone_center->size() == dim, ErrorKind::kDomain,
            "cone center length must equal D");
    for (Index l = 0; l < rows; ++l) {
      if (x.row(l).dot(*cone_center) < 0) x.row(l) *= -1.0;
    }
  }
  return x;
}

std::vector<double> layer_spectrum(const SynthDumpConfig& cfg,
                                   std::size_t layer) {
  const std::size_t d = cfg.hidden_dim;
  std::vector<double> s(d, 1.0);
  switch (cfg.profile) {
    case SynthProfile::kIsotropic:
      break;
    case SynthProfile::kAnisotropic:
      for (std::size_t j = 0; j < d; ++j)
        s[j] = std::pow(double(j + 1), -cfg.spectrum_decay);
      break;
    case SynthProfile::kCollapse: {
      const std::size_t n = cfg.num_layers;
      if (n == 0) break;
      if (layer == n) {
        std::fill(s.begin() + 1, s.end(), 0.0);
        break;
      }
      // Exponential decay whose rate grows geometrically with depth.
      const double t = double(layer) / double(n);
      const double rate = t == 0 ? 0.0 : 0.05 * std::pow(200.0, t);
      for (std::size_t j = 0; j < d; ++j) s[j] = std::exp(-rate * double(j));
      break;
    }
  }
  return s;
}

MatrixF rms_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  const Vector ones = Vector::Ones(x.cols());
  for (Index l = 0; l < x.rows(); ++l)
    out.row(l) = spectral::rmsnorm(x.row(l).transpose(), ones, 1e-6);
  return out.cast<float>();
}

}  // namespace

RepMatrix synth_matrix(Index rows, Index dim,
                       std::span<const double> target_spectrum,
                       const std::optional<Vector>& cone_center,
                       std::uint64_t seed) {
  require(rows >= 2, ErrorKind::kDomain, "synth_matrix needs L >= 2");
  require(dim >= 1, ErrorKind::kDomain, "synth_matrix needs D >= 1");
  require(Index(target_spectrum.size()) <= dim, ErrorKind::kDomain,
          "target spectrum longer than D");
  Rng rng(seed);
  const Matrix frame = random_orthonormal(dim, dim, rng);
  return synth_in_frame(rows, target_spectrum, frame, cone_center, rng);
}

ActivationDump synth_dump(const SynthDumpConfig& cfg) {
  require(cfg.hidden_dim >= 1 && cfg.num_sequences >= 1 && cfg.seq_len >= 2,
          ErrorKind::kDomain, "synth_dump: D, K >= 1 and L >= 2 required");
  const Index d = cfg.hidden_dim;
  Rng rng(cfg.seed);

  // One frame per layer shared by all sequences; coefficients per sequence.
  std::vector<Matrix> frames;
  for (std::size_t i = 0; i <= cfg.num_layers; ++i)
    frames.push_back(random_orthonormal(d, d, rng));

  Vector gains = Vector::Ones(d);
  if (cfg.profile == SynthProfile::kAnisotropic) {
    std::normal_distribution<double> z(0.0, 1.0);
    for (Index j = 0; j < d; ++j)
      gains(j) = std::exp(cfg.channel_gain_spread * z(rng));
  }
  std::optional<Vector> center;
  if (cfg.cone) {
    center = gaussian_matrix(d, 1, 1.0, rng).col(0).normalized();
  }

  ActivationDump dump;
  DumpManifest& m = dump.manifest;
  m.hidden_dim = cfg.hidden_dim;
  m.num_layers = cfg.num_layers;
  m.num_sequences = cfg.num_sequences;
  m.has_postnorm = cfg.postnorm;
  m.has_unembedding = cfg.unembedding;
  m.vocab_size = cfg.unembedding ? cfg.vocab_size : 0;
  m.model_label = cfg.label;
  m.creation_metadata = "synth_dump seed=" + std::to_string(cfg.seed);

  for (std::size_t k = 0; k < cfg.num_sequences; ++k) {
    SequenceRecord rec;
    std::vector<Matrix> hidden;
    for (std::size_t i = 0; i <= cfg.num_layers; ++i) {
      const std::vector<double> spec = layer_spectrum(cfg, i);
      Matrix x = synth_in_frame(cfg.seq_len, spec, frames[i], center, rng);
      x = x * gains.asDiagonal();
      hidden.push_back(x);
      rec.layers.push_back(x.cast<float>());
    }
    if (cfg.postnorm) {
      for (std::size_t i = 1; i <= cfg.num_layers; ++i) {
        rec.attn_norm.push_back(rms_rows(hidden[i - 1]));
        rec.ffn_norm.push_back(rms_rows(0.5 * (hidden[i - 1] + hidden[i])));
      }
    }
    dump.records.push_back(std::move(rec));
  }

  if (cfg.unembedding) {
    require(cfg.vocab_size >= 2, ErrorKind::kDomain, "vocab_size must be >= 2");
    UnembeddingBlock u;
    std::normal_distribution<double> jitter(0.0, 0.1);
    u.g_final.resize(d);
    for (Index j = 0; j < d; ++j) u.g_final(j) = float(1.0 + jitter(rng));
    u.epsilon = 1e-6f;
    u.w_u = gaussian_matrix(d, cfg.vocab_size, 1.0 / std::sqrt(double(d)), rng)
                .cast<float>();
    dump.unembedding = std::move(u);
  }
  validate(dump);
  return dump;
}

ActivationDump slice_sequences(const ActivationDump& dump, std::size_t begin,
                               std::size_t end) {
  require(begin < end && end <= dump.records.size(), ErrorKind::kDomain,
          "slice_sequences: bad range");
  ActivationDump out;
  out.manifest = dump.manifest;
  out.manifest.num_sequences = static_cast<std::uint32_t>(end - begin);
  out.records.assign(dump.records.begin() + std::ptrdiff_t(begin),
                     dump.records.begin() + std::ptrdiff_t(end));
  out.unembedding = dump.unembedding;
  return out;
}

}  // namespace edistill::dumps
