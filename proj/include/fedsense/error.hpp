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

#include <stdexcept>
#include <string>

namespace fedsense {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input or parameter vector of the wrong dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range hyper-parameter or precondition violation.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or a degenerate normalization. `layer()` names the first
/// layer whose activations went non-finite, or -1 when the layers were clean
/// and the loss itself is at fault.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int layer)
      : Error(what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

/// Malformed or truncated byte stream (checkpoints, wire updates, shards).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or override problem.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedsense
