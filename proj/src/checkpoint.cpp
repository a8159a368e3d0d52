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

#include "fedsense/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <vector>

namespace fedsense {

namespace io {

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in),
               std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path);
}

}  // namespace io

namespace {
constexpr std::uint8_t kCheckpointVersion = 1;
}

io::Bytes encode_checkpoint(const ParamVector& params) {
  io::Bytes out;
  out.reserve(9 + 4 * params.size());
  io::put_magic(out, "FSNS");
  io::put_u8(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (double v : params.values()) io::put_f32(out, static_cast<float>(v));
  return out;
}

ParamVector decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("FSNS");
  const auto version = r.u8("checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  const std::uint32_t count = r.u32("checkpoint count");
  r.need(static_cast<std::size_t>(count) * 4, "checkpoint payload");
  std::vector<double> values(count);
  for (auto& v : values) v = r.f32("checkpoint payload");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
  return ParamVector(std::move(values));
}

void save_checkpoint(const std::string& path, const ParamVector& params) {
  io::write_file(path, encode_checkpoint(params));
}

ParamVector load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace fedsense
