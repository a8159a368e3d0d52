/**
 * Copyright 2026 The FedSense Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Little-endian serialization helpers shared by the checkpoint, shard and
// wire formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsense/error.hpp"

namespace fedsense::io {

using Bytes = std::vector<std::uint8_t>;

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(Bytes& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_magic(Bytes& out, std::string_view magic) {
  out.insert(out.end(), magic.begin(), magic.end());
}

/// Bounds-checked cursor over a byte buffer; every read past the end throws
/// FormatError.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      throw FormatError("truncated " + std::string(what));
    }
  }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "header");
    if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw FormatError("bad magic, expected \"" + std::string(magic) + "\"");
    }
    pos_ += magic.size();
  }

  std::uint8_t u8(std::string_view what) {
    need(1, what);
    return bytes_[pos_++];
  }

  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32(std::string_view what) {
    return std::bit_cast<float>(u32(what));
  }

  std::span<const std::uint8_t> take(std::size_t n, std::string_view what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace fedsense::io
