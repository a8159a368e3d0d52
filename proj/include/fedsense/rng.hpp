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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedsense {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a path of tags
/// (client id, round, stream purpose, ...).
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(base);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t base,
                                std::initializer_list<std::uint64_t> tags) {
  return std::mt19937_64(derive_seed(base, tags));
}

/// Stream purposes used with derive_seed.
enum StreamTag : std::uint64_t {
  kStreamData = 1,
  kStreamInit = 2,
  kStreamUni = 3,
  kStreamLocal = 4,
  kStreamQuant = 5,
  kStreamServer = 6,
  kStreamEval = 7,
  kStreamProbe = 8,
  kStreamParticipation = 9,
};

}  // namespace fedsense
