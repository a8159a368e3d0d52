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

// Uplink codec: norm/sign/level quantization of client updates, momentum
// error feedback with periodic reset, and the "CSGQ" wire format.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedsense/byte_io.hpp"
#include "fedsense/param_vector.hpp"

namespace fedsense::csg {

inline constexpr int kFullPrecisionBits = 32;

/// How a normalized magnitude is mapped onto the level grid.
enum class Rounding {
  kStochastic,     // unbiased: round up with probability of the fractional part
  kDeterministic,  // nearest level, no randomness (uniform-quantization baseline)
};

struct QuantizedUpdate {
  double norm = 0.0;                // f32-representable
  std::vector<std::uint8_t> signs;  // 1 = negative
  std::vector<std::uint32_t> levels;
  std::vector<float> raw;           // bits == 32 only
  std::uint8_t bits = 8;
  std::uint32_t level_count = 0;    // s

  std::size_t dimension() const {
    return bits == kFullPrecisionBits ? raw.size() : levels.size();
  }
  friend bool operator==(const QuantizedUpdate&, const QuantizedUpdate&) = default;
};

/// s = max(2^(bits-1) - 1, 1).
std::uint32_t level_count(int bits);
/// Bits used per packed level: ceil(log2(s + 1)).
int level_width(int bits);

struct FeedbackState {
  ParamVector error;
  double alpha = 0.9;
  int reset_period = 10;
  int rounds_since_reset = 0;

  static FeedbackState zeros(std::size_t dim, double alpha, int reset_period);
};

/// G = delta + e.
ParamVector compensate(const ParamVector& delta, const FeedbackState& fb);

/// Quantizes `g` to `bits` (1..32). bits == 32 sends raw f32 values. At
/// bits == 1 every nonzero coordinate gets the single level regardless of
/// `rounding` (sign and norm only).
QuantizedUpdate cpr(const ParamVector& g, int bits, std::mt19937_64& rng,
                    Rounding rounding = Rounding::kStochastic);

/// out[i] = sign_i * level_i * norm / s. At bits == 1 the level unit is
/// norm / sqrt(d), so the reconstruction has the norm of the input.
ParamVector dcpr(const QuantizedUpdate& q);

struct FeedbackTrace {
  double instantaneous_norm = 0.0;  // ||g - dcpr(q)||
  double error_norm = 0.0;          // ||e^t|| before any reset
  bool reset = false;
};

/// e <- alpha*e + (1-alpha)*(g - dcpr(q)); zeroed every reset_period rounds.
FeedbackState update_feedback(const FeedbackState& fb, const ParamVector& g,
                              const QuantizedUpdate& q,
                              FeedbackTrace* trace = nullptr);

/// Exact encoded size in bytes for a d-dimensional update at `bits`.
std::size_t wire_size(std::size_t dim, int bits);
/// Bytes that do not scale with the dimension.
std::size_t wire_header_size(int bits);

io::Bytes encode_wire(const QuantizedUpdate& q);
QuantizedUpdate decode_wire(std::span<const std::uint8_t> bytes);

}  // namespace fedsense::csg
