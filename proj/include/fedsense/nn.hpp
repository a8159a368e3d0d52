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

// Minimal feed-forward substrate: a tanh MLP encoder with an optional linear
// reconstruction head, exact backpropagation, and a plain SGD step.
//
// Parameter layout is fixed: layers in order, each layer's weight matrix
// (out x in, row-major) followed by its bias; the head (if any) comes last
// in the same layout.

#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fedsense/param_vector.hpp"

namespace fedsense::nn {

using Vec = std::vector<double>;

class EncoderModel {
 public:
  /// `head_dim` > 0 appends a linear head mapping features to `head_dim`
  /// outputs (used by masked reconstruction).
  EncoderModel(std::vector<int> layer_dims, ParamVector params,
               int head_dim = 0);

  static std::size_t param_count(const std::vector<int>& layer_dims,
                                 int head_dim = 0);
  static EncoderModel zeros(std::vector<int> layer_dims, int head_dim = 0);
  /// Xavier-uniform weights, zero biases.
  static EncoderModel random(std::vector<int> layer_dims, int head_dim,
                             std::mt19937_64& rng);

  EncoderModel with_params(ParamVector params) const;

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  int head_dim() const { return head_dim_; }
  const ParamVector& params() const { return params_; }
  int input_dim() const { return layer_dims_.front(); }
  int feature_dim() const { return layer_dims_.back(); }
  int num_layers() const { return static_cast<int>(layer_dims_.size()) - 1; }

  /// Offset of layer `l`'s weight block; its bias follows the weights.
  std::size_t layer_offset(int l) const { return offsets_[l]; }
  std::size_t head_offset() const { return offsets_.back(); }

 private:
  std::vector<int> layer_dims_;
  int head_dim_;
  ParamVector params_;
  std::vector<std::size_t> offsets_;
};

struct GradResult {
  double loss = 0.0;
  ParamVector grad;
};

/// Activations of every layer; activations[0] is the input and
/// activations.back() the feature vector.
struct ForwardTrace {
  std::vector<Vec> activations;
  int first_nonfinite_layer = -1;
};

ForwardTrace forward_trace(const EncoderModel& model,
                           std::span<const double> x);
Vec forward(const EncoderModel& model, std::span<const double> x);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(features).
void backward(const EncoderModel& model, const ForwardTrace& trace,
              std::span<const double> dfeature, std::span<double> grad);

/// Linear head applied to a feature vector.
Vec reconstruct(const EncoderModel& model, std::span<const double> feature);

/// Accumulates head-parameter gradients into `grad` and returns
/// d(loss)/d(feature).
Vec reconstruct_backward(const EncoderModel& model,
                         std::span<const double> feature,
                         std::span<const double> doutput,
                         std::span<double> grad);

struct FeatureLoss {
  double loss = 0.0;
  std::vector<Vec> dfeatures;
};

/// A loss defined on the features of a batch of inputs.
using FeatureLossFn = std::function<FeatureLoss(std::span<const Vec>)>;

/// Forward every input, evaluate `loss_fn` on the resulting features and
/// backpropagate its feature gradients. Throws NumericalError on a
/// non-finite loss.
GradResult loss_and_grad(const EncoderModel& model, std::span<const Vec> inputs,
                         const FeatureLossFn& loss_fn);

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     double lr);

/// Throws NumericalError if `loss` is not finite, naming the first layer of
/// any trace with non-finite activations.
void require_finite_loss(double loss, std::span<const ForwardTrace> traces);

}  // namespace fedsense::nn
