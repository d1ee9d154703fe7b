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

// Activation archive ("dump"): per-sequence, per-layer hidden states captured
// from a teacher model, optionally with the two post-norm streams of every
// block and the final-norm/unembedding block.
//
// Binary layout (little-endian, f32 matrices row-major):
//
//   "EDAD" | u32 version=1 | u32 D | u32 N | u32 K | u8 has_postnorm
//   | u8 has_unembedding | u32 Voc | u32 label_len | label bytes
//   | per sequence: u32 L_k, (N+1) matrices f32[L_k x D],
//                   if has_postnorm: for layer 1..N attn-norm then ffn-norm
//   | if has_unembedding: f32[D] g_final, f32 eps, f32[D x Voc] W_u
//
// Layer 0 is the embedding output; layers 1..N are block outputs.

#ifndef EDISTILL_DUMPS_HPP_
#define EDISTILL_DUMPS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edistill/linalg.hpp"

namespace edistill::dumps {

inline constexpr char kMagic[4] = {'E', 'D', 'A', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct DumpManifest {
  std::uint32_t format_version = kFormatVersion;
  std::uint32_t hidden_dim = 0;     // D
  std::uint32_t num_layers = 0;     // N transformer blocks
  std::uint32_t num_sequences = 0;  // K
  bool has_postnorm = false;
  bool has_unembedding = false;
  std::uint32_t vocab_size = 0;
  std::string model_label;
  // Carried by the JSON sidecar only; the binary header has no slot for it.
  std::string creation_metadata;

  bool operator==(const DumpManifest&) const = default;
};

struct SequenceRecord {
  std::vector<MatrixF> layers;     // N+1 matrices, L_k x D
  std::vector<MatrixF> attn_norm;  // N matrices when has_postnorm
  std::vector<MatrixF> ffn_norm;   // N matrices when has_postnorm

  Index seq_len() const { return layers.empty() ? 0 : layers.front().rows(); }
  bool operator==(const SequenceRecord& other) const;
};

struct UnembeddingBlock {
  VectorF g_final;  // length D
  float epsilon = 1e-6f;
  MatrixF w_u;      // D x Voc

  bool operator==(const UnembeddingBlock& other) const;
};

struct ActivationDump {
  DumpManifest manifest;
  std::vector<SequenceRecord> records;
  std::optional<UnembeddingBlock> unembedding;

  bool operator==(const ActivationDump&) const = default;

  // Layer i of sequence k promoted to double precision.
  Matrix layer(std::size_t k, std::size_t i) const;
};

// Throws kFormat on manifest/record inconsistencies and kData on non-finite
// entries.
void validate(const DumpManifest& manifest,
              std::span<const SequenceRecord> records,
              const std::optional<UnembeddingBlock>& unembedding);
void validate(const ActivationDump& dump);

void write_dump(const DumpManifest& manifest,
                std::span<const SequenceRecord> records,
                const std::optional<UnembeddingBlock>& unembedding,
                std::ostream& out);
void write_dump(const ActivationDump& dump, std::ostream& out);

ActivationDump read_dump(std::istream& in);

// File helpers; the writer also emits `<path>.json`, a human-readable mirror
// of the header. The reader picks up creation_metadata from it if present.
void write_dump_file(const ActivationDump& dump,
                     const std::filesystem::path& path);
ActivationDump read_dump_file(const std::filesystem::path& path);

std::string manifest_json(const DumpManifest& manifest);

// L x D matrix whose covariance (1/L) X^T X has eigenvalues target_spectrum
// (zero-padded to D) in a random orthonormal frame. With L >= D the left
// frame is orthonormal too, so the covariance spectrum is exact; for L < D the
// coefficients are i.i.d. unit Gaussians. With a cone center, rows whose
// inner product with it is negative are negated, which leaves X^T X intact.
RepMatrix synth_matrix(Index rows, Index dim,
                       std::span<const double> target_spectrum,
                       const std::optional<Vector>& cone_center,
                       std::uint64_t seed);

enum class SynthProfile {
  kIsotropic,    // flat spectrum at every layer
  kAnisotropic,  // power-law spectrum, heavy-tailed per-channel gains
  kCollapse,     // layers interpolate from isotropic to rank 1
};

struct SynthDumpConfig {
  SynthProfile profile = SynthProfile::kAnisotropic;
  std::uint32_t hidden_dim = 32;
  std::uint32_t num_layers = 4;
  std::uint32_t num_sequences = 8;
  std::uint32_t seq_len = 64;
  bool postnorm = false;
  bool unembedding = false;
  std::uint32_t vocab_size = 64;
  // Power-law exponent of the anisotropic spectrum, lambda_j ~ (j+1)^-decay.
  double spectrum_decay = 1.0;
  // Log-scale spread of per-channel gains in the anisotropic profile.
  double channel_gain_spread = 1.5;
  bool cone = false;
  std::uint64_t seed = 0;
  std::string label = "synthetic";
};

ActivationDump synth_dump(const SynthDumpConfig& cfg);

// Sequences [begin, end) as a standalone dump (header K updated).
ActivationDump slice_sequences(const ActivationDump& dump, std::size_t begin,
                               std::size_t end);

}  // namespace edistill::dumps

#endif  // EDISTILL_DUMPS_HPP_
