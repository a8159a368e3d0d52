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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace fedsense {

/// Flat real-valued vector: model parameters, updates, perturbations and
/// feedback errors all share this representation. Entries are always finite;
/// every constructor validates that.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0);
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& raw() const { return values_; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

/// Throws ShapeError unless both vectors have the same dimension.
void require_same_dim(const ParamVector& a, const ParamVector& b,
                      std::string_view what);

ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& a);

double dot(const ParamVector& a, const ParamVector& b);
double norm_l2(const ParamVector& a);
double norm_l2(std::span<const double> a);

}  // namespace fedsense
