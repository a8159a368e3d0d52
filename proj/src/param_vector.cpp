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

#include "fedsense/param_vector.hpp"

#include <cmath>
#include <string>

#include "fedsense/error.hpp"

namespace fedsense {

namespace {

void require_finite(const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericalError("non-finite entry at index " + std::to_string(i),
                           -1);
    }
  }
}

}  // namespace

ParamVector::ParamVector(std::size_t dim, double fill) : values_(dim, fill) {
  require_finite(values_);
}

ParamVector::ParamVector(std::vector<double> values)
    : values_(std::move(values)) {
  require_finite(values_);
}

ParamVector::ParamVector(std::initializer_list<double> values)
    : values_(values) {
  require_finite(values_);
}

void require_same_dim(const ParamVector& a, const ParamVector& b,
                      std::string_view what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return ParamVector(std::move(out));
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "subtract");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return ParamVector(std::move(out));
}

ParamVector operator*(double s, const ParamVector& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
  return ParamVector(std::move(out));
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm_l2(std::span<const double> a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return std::sqrt(acc);
}

double norm_l2(const ParamVector& a) { return norm_l2(a.values()); }

}  // namespace fedsense
