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

// Shared helpers for the test binaries: finite-difference gradients and
// small random fixtures.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fedsense/nn.hpp"
#include "fedsense/param_vector.hpp"
#include "fedsense/ssl.hpp"

namespace fedsense::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;

/// Central differences of `f` at `x`.
inline std::vector<double> fd_gradient(const std::function<double(const ParamVector&)>& f,
                                       const ParamVector& x, double h = kFdStep) {
  std::vector<double> g(x.size());
  std::vector<double> v = x.raw();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = f(ParamVector(v));
    v[i] = keep - h;
    const double down = f(ParamVector(v));
    v[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor). The floor keeps coordinates
/// whose true gradient is ~0 from dividing roundoff by roundoff.
inline double max_rel_error(const ParamVector& analytic, const std::vector<double>& numeric,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double den = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / den);
  }
  return worst;
}

inline bool is_zero(const ParamVector& v) {
  return std::all_of(v.raw().begin(), v.raw().end(), [](double x) { return x == 0.0; });
}

inline ParamVector random_vector(std::size_t dim, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return ParamVector(std::move(v));
}

inline std::vector<ssl::Sample> random_samples(int count, int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ssl::Sample> out(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    out[k].pixels.resize(static_cast<std::size_t>(dim));
    for (auto& p : out[k].pixels) p = u(rng);
    out[k].domain_id = k % 3;
  }
  return out;
}

inline std::vector<ssl::ViewPair> random_views(const std::vector<ssl::Sample>& samples,
                                               ssl::Mode mode, std::mt19937_64& rng) {
  std::vector<ssl::ViewPair> views;
  for (const auto& s : samples) views.push_back(ssl::make_views(s, mode, 0.5, rng));
  return views;
}

}  // namespace fedsense::testing
