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

#include "fedsense/csg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsense/error.hpp"

namespace fedsense::csg {

namespace {

void validate_bits(int bits) {
  if (bits < 1 || bits > kFullPrecisionBits) {
    throw ParameterError("bit width must satisfy 1 <= b <= 32, got " +
                         std::to_string(bits));
  }
}

// magic(4) + bits(1) + dimension(4)
constexpr std::size_t kPrefix = 9;

// Magnitude unit of one level: norm / s, except at b = 1 where the single
// level carries norm / sqrt(d) so that sign-only updates keep the input norm.
double level_unit(const QuantizedUpdate& q, std::size_t d) {
  if (q.bits == 1) return q.norm / std::sqrt(static_cast<double>(d));
  return q.norm / static_cast<double>(q.level_count);
}

}  // namespace

std::uint32_t level_count(int bits) {
  validate_bits(bits);
  if (bits == kFullPrecisionBits) return 0;
  const std::uint32_t s = (std::uint32_t{1} << (bits - 1)) - 1;
  return std::max<std::uint32_t>(s, 1);
}

int level_width(int bits) {
  const std::uint32_t s = level_count(bits);
  int w = 0;
  while ((std::uint64_t{1} << w) < static_cast<std::uint64_t>(s) + 1) ++w;
  return w;
}

FeedbackState FeedbackState::zeros(std::size_t dim, double alpha,
                                   int reset_period) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ParameterError("momentum factor alpha must lie in [0,1)");
  }
  if (reset_period <= 0) throw ParameterError("reset period must be positive");
  return FeedbackState{ParamVector(dim), alpha, reset_period, 0};
}

ParamVector compensate(const ParamVector& delta, const FeedbackState& fb) {
  require_same_dim(delta, fb.error, "compensate");
  return delta + fb.error;
}

QuantizedUpdate cpr(const ParamVector& g, int bits, std::mt19937_64& rng,
                    Rounding rounding) {
  validate_bits(bits);
  QuantizedUpdate q;
  q.bits = static_cast<std::uint8_t>(bits);
  q.level_count = level_count(bits);
  if (bits == kFullPrecisionBits) {
    q.raw.reserve(g.size());
    for (double v : g.values()) q.raw.push_back(static_cast<float>(v));
    return q;
  }
  const std::size_t d = g.size();
  q.signs.assign(d, 0);
  q.levels.assign(d, 0);
  q.norm = static_cast<float>(norm_l2(g));
  if (q.norm == 0.0) return q;
  const double unit = level_unit(q, d);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < d; ++i) {
    q.signs[i] = g[i] < 0.0 ? 1 : 0;
    const double scaled = std::abs(g[i]) / unit;
    std::uint32_t level;
    if (bits == 1) {
      level = g[i] != 0.0 ? 1 : 0;
    } else if (rounding == Rounding::kDeterministic) {
      level = static_cast<std::uint32_t>(std::lround(scaled));
    } else {
      const double floor_level = std::floor(scaled);
      level = static_cast<std::uint32_t>(floor_level);
      if (unif(rng) < scaled - floor_level) ++level;
    }
    q.levels[i] = std::min(level, q.level_count);
  }
  return q;
}

ParamVector dcpr(const QuantizedUpdate& q) {
  if (q.bits == kFullPrecisionBits) {
    return ParamVector(std::vector<double>(q.raw.begin(), q.raw.end()));
  }
  if (q.signs.size() != q.levels.size()) {
    throw ShapeError("quantized update has mismatched sign/level lengths");
  }
  std::vector<double> out(q.levels.size());
  const double unit = level_unit(q, out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mag = unit * q.levels[i];
    out[i] = q.signs[i] ? -mag : mag;
  }
  return ParamVector(std::move(out));
}

FeedbackState update_feedback(const FeedbackState& fb, const ParamVector& g,
                              const QuantizedUpdate& q, FeedbackTrace* trace) {
  require_same_dim(g, fb.error, "update_feedback");
  const ParamVector deq = dcpr(q);
  require_same_dim(g, deq, "update_feedback");
  std::vector<double> e(g.size());
  double inst_sq = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double inst = g[i] - deq[i];
    inst_sq += inst * inst;
    e[i] = fb.alpha * fb.error[i] + (1.0 - fb.alpha) * inst;
  }
  FeedbackState next = fb;
  next.error = ParamVector(std::move(e));
  next.rounds_since_reset = fb.rounds_since_reset + 1;
  if (trace) {
    trace->instantaneous_norm = std::sqrt(inst_sq);
    trace->error_norm = norm_l2(next.error);
    trace->reset = false;
  }
  if (next.rounds_since_reset >= next.reset_period) {
    next.error = ParamVector(g.size());
    next.rounds_since_reset = 0;
    if (trace) trace->reset = true;
  }
  return next;
}

std::size_t wire_header_size(int bits) {
  validate_bits(bits);
  return bits == kFullPrecisionBits ? kPrefix : kPrefix + 4;
}

std::size_t wire_size(std::size_t dim, int bits) {
  if (bits == kFullPrecisionBits) return kPrefix + 4 * dim;
  const std::size_t width = static_cast<std::size_t>(level_width(bits));
  return wire_header_size(bits) + (dim + 7) / 8 + (dim * width + 7) / 8;
}

namespace {

void pack_bits(io::Bytes& out, std::size_t start, std::size_t bit_index,
               std::uint32_t value, int width) {
  for (int b = 0; b < width; ++b, ++bit_index) {
    if ((value >> b) & 1u) {
      out[start + bit_index / 8] |= static_cast<std::uint8_t>(1u << (bit_index % 8));
    }
  }
}

std::uint32_t unpack_bits(std::span<const std::uint8_t> in,
                          std::size_t bit_index, int width) {
  std::uint32_t v = 0;
  for (int b = 0; b < width; ++b, ++bit_index) {
    if ((in[bit_index / 8] >> (bit_index % 8)) & 1u) v |= 1u << b;
  }
  return v;
}

}  // namespace

io::Bytes encode_wire(const QuantizedUpdate& q) {
  validate_bits(q.bits);
  const std::size_t d = q.dimension();
  if (d == 0) throw ParameterError("cannot encode an empty update");
  io::Bytes out;
  out.reserve(wire_size(d, q.bits));
  io::put_magic(out, "CSGQ");
  io::put_u8(out, q.bits);
  io::put_u32(out, static_cast<std::uint32_t>(d));
  if (q.bits == kFullPrecisionBits) {
    for (float v : q.raw) io::put_f32(out, v);
    return out;
  }
  if (q.signs.size() != d || q.level_count != level_count(q.bits)) {
    throw ParameterError("inconsistent quantized update");
  }
  io::put_f32(out, static_cast<float>(q.norm));
  const std::size_t sign_start = out.size();
  out.resize(sign_start + (d + 7) / 8, 0);
  for (std::size_t i = 0; i < d; ++i) pack_bits(out, sign_start, i, q.signs[i], 1);
  const int width = level_width(q.bits);
  const std::size_t level_start = out.size();
  out.resize(level_start + (d * width + 7) / 8, 0);
  for (std::size_t i = 0; i < d; ++i) {
    if (q.levels[i] > q.level_count) throw ParameterError("level exceeds s");
    pack_bits(out, level_start, i * width, q.levels[i], width);
  }
  return out;
}

QuantizedUpdate decode_wire(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("CSGQ");
  const int bits = r.u8("bit width");
  if (bits < 1 || bits > kFullPrecisionBits) {
    throw FormatError("malformed header: bit width " + std::to_string(bits));
  }
  const std::uint32_t d = r.u32("dimension");
  if (d == 0) throw FormatError("malformed header: zero dimension");
  QuantizedUpdate q;
  q.bits = static_cast<std::uint8_t>(bits);
  q.level_count = level_count(bits);
  if (bits == kFullPrecisionBits) {
    r.need(static_cast<std::size_t>(d) * 4, "payload");
    q.raw.resize(d);
    for (auto& v : q.raw) v = r.f32("payload");
  } else {
    q.norm = r.f32("norm");
    if (!(q.norm >= 0.0) || !std::isfinite(q.norm)) {
      throw FormatError("malformed header: invalid norm");
    }
    const auto signs = r.take((d + 7) / 8, "sign bits");
    const int width = level_width(bits);
    const auto levels = r.take((static_cast<std::size_t>(d) * width + 7) / 8,
                               "level bits");
    q.signs.resize(d);
    q.levels.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      q.signs[i] = static_cast<std::uint8_t>(unpack_bits(signs, i, 1));
      q.levels[i] = unpack_bits(levels, i * width, width);
      if (q.levels[i] > q.level_count) throw FormatError("level exceeds s");
      if (q.norm == 0.0 && q.levels[i] != 0) {
        throw FormatError("nonzero level with zero norm");
      }
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after update");
  return q;
}

}  // namespace fedsense::csg
