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

// Little-endian readers and writers shared by the binary containers.

#ifndef EDISTILL_SRC_BYTE_IO_HPP_
#define EDISTILL_SRC_BYTE_IO_HPP_

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "edistill/error.hpp"
#include "edistill/linalg.hpp"

namespace edistill::detail {

// Little-endian byte writer.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) fail(ErrorKind::kIo, "write failed");
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void floats(const float* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(p, n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* p, std::size_t n, const std::string& ctx) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(ErrorKind::kCorruptDump, "truncated stream while reading " + ctx);
    }
  }
  std::uint8_t u8(const std::string& ctx) {
    std::uint8_t v;
    bytes(&v, 1, ctx);
    return v;
  }
  std::uint32_t u32(const std::string& ctx) {
    unsigned char b[4];
    bytes(b, 4, ctx);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
  }
  float f32(const std::string& ctx) {
    return std::bit_cast<float>(u32(ctx));
  }
  void floats(float* p, std::size_t n, const std::string& ctx) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(p, n * sizeof(float), ctx);
    } else {
      for (std::size_t i = 0; i < n; ++i) p[i] = f32(ctx);
    }
  }
  MatrixF matrix(Index rows, Index cols, const std::string& ctx) {
    MatrixF m(rows, cols);
    floats(m.data(), static_cast<std::size_t>(rows * cols), ctx);
    return m;
  }

 private:
  std::istream& in_;
};

}  // namespace edistill::detail

#endif  // EDISTILL_SRC_BYTE_IO_HPP_
