// Copyright 2026 The sedge Authors.
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

// Binary tensor files ("SEDG" v1).
//
//   bytes 0-3    magic "SEDG"
//   bytes 4-7    version, u32 LE (1)
//   bytes 8-11   dtype, u32 LE (1 = f64 LE, 2 = u32 LE)
//   bytes 12-15  rank, u32 LE
//   rank x u32   extents
//   payload      row-major elements

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedge/tensor.hpp"

namespace sedge {

enum class TensorIoErrorKind {
  io,
  bad_magic,
  bad_version,
  bad_dtype,
  bad_shape,
  dim_overflow,
  payload_mismatch,
  non_finite,
};

class TensorIoError : public std::runtime_error {
 public:
  TensorIoError(TensorIoErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  TensorIoErrorKind kind() const noexcept { return kind_; }

 private:
  TensorIoErrorKind kind_;
};

enum class DType : std::uint32_t { f64 = 1, u32 = 2 };

inline constexpr std::array<char, 4> kTensorMagic = {'S', 'E', 'D', 'G'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::size_t kTensorHeaderBytes = 16;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::vector<unsigned char> encode_header(DType dtype,
                                                const std::vector<std::size_t>& dims) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
  put_u32(out, kTensorVersion);
  put_u32(out, static_cast<std::uint32_t>(dtype));
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::size_t d : dims) {
    if (d > 0xFFFFFFFFu) {
      throw TensorIoError(TensorIoErrorKind::dim_overflow,
                          "extent " + std::to_string(d) + " exceeds u32");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  return out;
}

inline void write_bytes(const std::filesystem::path& path,
                        const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw TensorIoError(TensorIoErrorKind::io,
                        "cannot open " + path.string() + " for writing");
  }
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) {
    throw TensorIoError(TensorIoErrorKind::io, "write failed: " + path.string());
  }
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw TensorIoError(TensorIoErrorKind::io, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Decoded {
  std::vector<std::size_t> dims;
  const unsigned char* payload = nullptr;
  std::size_t count = 0;
};

inline Decoded decode_header(const std::vector<unsigned char>& bytes, DType expected,
                             const std::string& where) {
  if (bytes.size() < kTensorHeaderBytes ||
      !std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin())) {
    throw TensorIoError(TensorIoErrorKind::bad_magic, where + ": bad magic");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kTensorVersion) {
    throw TensorIoError(TensorIoErrorKind::bad_version,
                        where + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t dtype = get_u32(bytes.data() + 8);
  if (dtype != static_cast<std::uint32_t>(expected)) {
    throw TensorIoError(TensorIoErrorKind::bad_dtype,
                        where + ": dtype code " + std::to_string(dtype) +
                            ", expected " +
                            std::to_string(static_cast<std::uint32_t>(expected)));
  }
  const std::uint32_t rank = get_u32(bytes.data() + 12);
  if (rank == 0) {
    throw TensorIoError(TensorIoErrorKind::bad_shape, where + ": rank 0");
  }
  const std::size_t remaining = bytes.size() - kTensorHeaderBytes;
  if (remaining / 4 < rank) {
    throw TensorIoError(TensorIoErrorKind::payload_mismatch,
                        where + ": payload length mismatch (truncated dims)");
  }
  Decoded out;
  const std::size_t elem = expected == DType::f64 ? 8 : 4;
  const std::size_t max_count = std::numeric_limits<std::size_t>::max() / elem;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32(bytes.data() + kTensorHeaderBytes + 4 * i);
    if (d == 0) {
      throw TensorIoError(TensorIoErrorKind::bad_shape,
                          where + ": zero extent in dim " + std::to_string(i));
    }
    if (count > max_count / d) {
      throw TensorIoError(TensorIoErrorKind::dim_overflow,
                          where + ": dims product overflows");
    }
    count *= d;
    out.dims.push_back(d);
  }
  const std::size_t offset = kTensorHeaderBytes + 4 * std::size_t{rank};
  if (bytes.size() - offset != count * elem) {
    throw TensorIoError(TensorIoErrorKind::payload_mismatch,
                        where + ": payload length mismatch (expected " +
                            std::to_string(count * elem) + " bytes, found " +
                            std::to_string(bytes.size() - offset) + ")");
  }
  out.payload = bytes.data() + offset;
  out.count = count;
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode_tensor(const Tensor& t) {
  auto out = detail::encode_header(DType::f64, t.dims());
  out.reserve(out.size() + 8 * t.size());
  for (double v : t.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Tensor decode_tensor(const std::vector<unsigned char>& bytes,
                            const std::string& where = "tensor") {
  const auto dec = detail::decode_header(bytes, DType::f64, where);
  std::vector<double> data(dec.count);
  for (std::size_t i = 0; i < dec.count; ++i) {
    data[i] = std::bit_cast<double>(detail::get_u64(dec.payload + 8 * i));
    if (!std::isfinite(data[i])) {
      throw TensorIoError(TensorIoErrorKind::non_finite,
                          where + ": non-finite value at index " + std::to_string(i));
    }
  }
  return Tensor(dec.dims, std::move(data));
}

/// Writes `t` to `path`. Rejects non-finite payloads so every file on disk
/// is readable back.
inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  if (!t.all_finite()) {
    throw TensorIoError(TensorIoErrorKind::non_finite,
                        path.string() + ": refusing to write non-finite tensor");
  }
  detail::write_bytes(path, encode_tensor(t));
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(detail::read_bytes(path), path.string());
}

// Index files (labels, domain ids) are rank-1 u32 tensors.
inline void write_index(const std::filesystem::path& path,
                        const std::vector<std::uint32_t>& values) {
  if (values.empty()) {
    throw TensorIoError(TensorIoErrorKind::bad_shape,
                        path.string() + ": empty index vector");
  }
  auto out = detail::encode_header(DType::u32, {values.size()});
  for (std::uint32_t v : values) detail::put_u32(out, v);
  detail::write_bytes(path, out);
}

inline std::vector<std::uint32_t> read_index(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  const auto dec = detail::decode_header(bytes, DType::u32, path.string());
  if (dec.dims.size() != 1) {
    throw TensorIoError(TensorIoErrorKind::bad_shape,
                        path.string() + ": index file must be rank 1");
  }
  std::vector<std::uint32_t> out(dec.count);
  for (std::size_t i = 0; i < dec.count; ++i) out[i] = detail::get_u32(dec.payload + 4 * i);
  return out;
}

}  // namespace sedge
