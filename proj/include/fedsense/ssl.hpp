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

// Self-supervised objectives, view augmentation and the synthetic
// multi-domain dataset standing in for institution-private imagery.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedsense/byte_io.hpp"
#include "fedsense/nn.hpp"

namespace fedsense::ssl {

using nn::Vec;

/// Added to every norm used as a denominator.
inline constexpr double kNormEps = 1e-12;

enum class Mode { kContrastive, kMasked };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

struct Sample {
  Vec pixels;  // flattened patch, entries in [0,1]
  int domain_id = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ViewPair {
  Vec view_a;
  Vec view_b;
  std::vector<std::uint8_t> mask;  // masked mode only
};

inline constexpr int kServerOwner = -1;

struct Shard {
  std::vector<Sample> samples;
  int owner = kServerOwner;

  std::size_t size() const { return samples.size(); }
  friend bool operator==(const Shard&, const Shard&) = default;
};

/// Procedural texture of one sensor domain: a sinusoidal grating.
struct Domain {
  double orientation;  // radians
  double frequency;    // cycles per patch width
  double phase;        // base phase, radians
  double noise;        // pixel noise standard deviation
};

struct DataConfig {
  int patch_side = 8;
  int num_domains = 6;
  /// Half-width of the uniform jitter around each domain's base phase.
  double phase_jitter = 1.5;
  /// Half-width of the per-sample global brightness offset.
  double brightness = 0.08;
  /// Mean pixel level the grating oscillates around.
  double background = 0.5;
  /// Multiplier on the grating amplitude range.
  double amplitude_scale = 1.0;
  /// Multiplier on each domain's pixel noise level.
  double noise_scale = 3.0;

  int patch_dim() const { return patch_side * patch_side; }
};

std::vector<Domain> domain_table(int num_domains);

Sample draw_sample(const Domain& domain, int domain_id, const DataConfig& cfg,
                   std::mt19937_64& rng);

struct FederationData {
  std::vector<Shard> clients;
  Shard server;
};

/// Each client's domain mixture is drawn from a symmetric
/// Dirichlet(heterogeneity); per-domain counts are apportioned from the
/// mixture by largest remainder. The public shard is uniform over domains.
FederationData gen_federation_data(int num_clients,
                                   std::span<const int> samples_per_client,
                                   int public_samples, double heterogeneity,
                                   std::uint64_t seed,
                                   const DataConfig& cfg = {});

/// Uniform-over-domains labeled samples (for linear probes).
std::vector<Sample> gen_labeled(int count, std::uint64_t seed,
                                const DataConfig& cfg = {});

ViewPair make_views(const Sample& x, Mode mode, double mask_ratio,
                    std::mt19937_64& rng);

/// Contrastive: mean(1 - cos(f(a), f(b))). Masked: the linear head
/// reconstructs view_a from f(view_b); mean squared error on masked entries.
nn::GradResult ssl_loss(const nn::EncoderModel& model,
                        std::span<const ViewPair> batch, Mode mode);

struct CosineGrad {
  double cosine = 0.0;
  Vec d_a;  // d cos / d a
  Vec d_b;  // d cos / d b
};

/// Cosine similarity with kNormEps-stabilized norms and its gradient.
/// Throws NumericalError if the stabilized denominator is degenerate.
CosineGrad cosine_with_grad(std::span<const double> a,
                            std::span<const double> b);

/// u32 count | u32 dim | FSNS checkpoint of count*(dim+1) floats, with the
/// domain id stored after each sample's pixels.
io::Bytes encode_shard(const Shard& shard);
Shard decode_shard(std::span<const std::uint8_t> bytes, int owner);

}  // namespace fedsense::ssl
