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

#include "fedsense/nn.hpp"

#include <cmath>
#include <string>

#include "fedsense/error.hpp"

namespace fedsense::nn {

namespace {

void validate_dims(const std::vector<int>& dims, int head_dim) {
  if (dims.size() < 2) {
    throw ParameterError("encoder needs at least an input and output width");
  }
  for (int d : dims) {
    if (d <= 0) throw ParameterError("layer widths must be positive");
  }
  if (head_dim < 0) throw ParameterError("head width must be non-negative");
}

}  // namespace

std::size_t EncoderModel::param_count(const std::vector<int>& layer_dims,
                                      int head_dim) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    n += static_cast<std::size_t>(layer_dims[l]) * layer_dims[l + 1] +
         layer_dims[l + 1];
  }
  if (head_dim > 0 && !layer_dims.empty()) {
    n += static_cast<std::size_t>(layer_dims.back()) * head_dim + head_dim;
  }
  return n;
}

EncoderModel::EncoderModel(std::vector<int> layer_dims, ParamVector params,
                           int head_dim)
    : layer_dims_(std::move(layer_dims)),
      head_dim_(head_dim),
      params_(std::move(params)) {
  validate_dims(layer_dims_, head_dim_);
  const std::size_t expected = param_count(layer_dims_, head_dim_);
  if (params_.size() != expected) {
    throw ShapeError("encoder expects " + std::to_string(expected) +
                     " parameters, got " + std::to_string(params_.size()));
  }
  std::size_t off = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(layer_dims_[l]) * layer_dims_[l + 1] +
           layer_dims_[l + 1];
  }
  offsets_.push_back(off);
}

EncoderModel EncoderModel::zeros(std::vector<int> layer_dims, int head_dim) {
  validate_dims(layer_dims, head_dim);
  const std::size_t n = param_count(layer_dims, head_dim);
  return EncoderModel(std::move(layer_dims), ParamVector(n), head_dim);
}

EncoderModel EncoderModel::random(std::vector<int> layer_dims, int head_dim,
                                  std::mt19937_64& rng) {
  validate_dims(layer_dims, head_dim);
  std::vector<double> p;
  p.reserve(param_count(layer_dims, head_dim));
  auto fill_layer = [&](int in, int out) {
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (int i = 0; i < in * out; ++i) p.push_back(u(rng));
    p.insert(p.end(), static_cast<std::size_t>(out), 0.0);
  };
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    fill_layer(layer_dims[l], layer_dims[l + 1]);
  }
  if (head_dim > 0) fill_layer(layer_dims.back(), head_dim);
  return EncoderModel(std::move(layer_dims), ParamVector(std::move(p)),
                      head_dim);
}

EncoderModel EncoderModel::with_params(ParamVector params) const {
  return EncoderModel(layer_dims_, std::move(params), head_dim_);
}

ForwardTrace forward_trace(const EncoderModel& model,
                           std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.input_dim()) {
    throw ShapeError("input has dimension " + std::to_string(x.size()) +
                     ", encoder expects " + std::to_string(model.input_dim()));
  }
  const auto& dims = model.layer_dims();
  const auto p = model.params().values();
  ForwardTrace trace;
  trace.activations.reserve(dims.size());
  trace.activations.emplace_back(x.begin(), x.end());
  const int last = model.num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    const double* w = p.data() + model.layer_offset(l);
    const double* b = w + static_cast<std::size_t>(in) * out;
    const Vec& a = trace.activations.back();
    Vec z(out);
    bool finite = true;
    for (int r = 0; r < out; ++r) {
      double acc = b[r];
      const double* row = w + static_cast<std::size_t>(r) * in;
      for (int c = 0; c < in; ++c) acc += row[c] * a[c];
      z[r] = l == last ? acc : std::tanh(acc);
      finite = finite && std::isfinite(z[r]);
    }
    if (!finite && trace.first_nonfinite_layer < 0) {
      trace.first_nonfinite_layer = l;
    }
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

Vec forward(const EncoderModel& model, std::span<const double> x) {
  return std::move(forward_trace(model, x).activations.back());
}

void backward(const EncoderModel& model, const ForwardTrace& trace,
              std::span<const double> dfeature, std::span<double> grad) {
  const auto& dims = model.layer_dims();
  const auto p = model.params().values();
  if (grad.size() != p.size()) throw ShapeError("gradient buffer size");
  if (static_cast<int>(dfeature.size()) != model.feature_dim()) {
    throw ShapeError("feature gradient dimension");
  }
  Vec delta(dfeature.begin(), dfeature.end());
  for (int l = model.num_layers() - 1; l >= 0; --l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    const std::size_t off = model.layer_offset(l);
    const double* w = p.data() + off;
    double* gw = grad.data() + off;
    double* gb = gw + static_cast<std::size_t>(in) * out;
    const Vec& a_in = trace.activations[l];
    // Hidden layers carry tanh; convert d/d(activation) to d/d(preactivation).
    if (l != model.num_layers() - 1) {
      const Vec& a_out = trace.activations[l + 1];
      for (int r = 0; r < out; ++r) delta[r] *= 1.0 - a_out[r] * a_out[r];
    }
    Vec prev(l > 0 ? in : 0, 0.0);
    for (int r = 0; r < out; ++r) {
      const double d = delta[r];
      gb[r] += d;
      if (d == 0.0) continue;
      double* grow = gw + static_cast<std::size_t>(r) * in;
      for (int c = 0; c < in; ++c) grow[c] += d * a_in[c];
      if (l == 0) continue;  // no gradient w.r.t. the input
      const double* row = w + static_cast<std::size_t>(r) * in;
      for (int c = 0; c < in; ++c) prev[c] += d * row[c];
    }
    delta = std::move(prev);
  }
}

Vec reconstruct(const EncoderModel& model, std::span<const double> feature) {
  const int in = model.feature_dim();
  const int out = model.head_dim();
  if (out <= 0) throw ParameterError("model has no reconstruction head");
  if (static_cast<int>(feature.size()) != in) {
    throw ShapeError("feature dimension");
  }
  const double* w = model.params().values().data() + model.head_offset();
  const double* b = w + static_cast<std::size_t>(in) * out;
  Vec y(out);
  for (int r = 0; r < out; ++r) {
    double acc = b[r];
    const double* row = w + static_cast<std::size_t>(r) * in;
    for (int c = 0; c < in; ++c) acc += row[c] * feature[c];
    y[r] = acc;
  }
  return y;
}

Vec reconstruct_backward(const EncoderModel& model,
                         std::span<const double> feature,
                         std::span<const double> doutput,
                         std::span<double> grad) {
  const int in = model.feature_dim();
  const int out = model.head_dim();
  if (out <= 0) throw ParameterError("model has no reconstruction head");
  if (static_cast<int>(doutput.size()) != out) {
    throw ShapeError("head gradient dimension");
  }
  const std::size_t off = model.head_offset();
  const double* w = model.params().values().data() + off;
  double* gw = grad.data() + off;
  double* gb = gw + static_cast<std::size_t>(in) * out;
  Vec dfeature(in, 0.0);
  for (int r = 0; r < out; ++r) {
    const double d = doutput[r];
    gb[r] += d;
    const double* row = w + static_cast<std::size_t>(r) * in;
    double* grow = gw + static_cast<std::size_t>(r) * in;
    for (int c = 0; c < in; ++c) {
      grow[c] += d * feature[c];
      dfeature[c] += d * row[c];
    }
  }
  return dfeature;
}

void require_finite_loss(double loss, std::span<const ForwardTrace> traces) {
  if (std::isfinite(loss)) return;
  int layer = -1;
  for (const auto& t : traces) {
    if (t.first_nonfinite_layer >= 0 &&
        (layer < 0 || t.first_nonfinite_layer < layer)) {
      layer = t.first_nonfinite_layer;
    }
  }
  throw NumericalError(
      layer >= 0 ? "non-finite activations at layer " + std::to_string(layer)
                 : std::string("non-finite loss"),
      layer);
}

GradResult loss_and_grad(const EncoderModel& model, std::span<const Vec> inputs,
                         const FeatureLossFn& loss_fn) {
  std::vector<ForwardTrace> traces;
  std::vector<Vec> features;
  traces.reserve(inputs.size());
  features.reserve(inputs.size());
  for (const auto& x : inputs) {
    traces.push_back(forward_trace(model, x));
    features.push_back(traces.back().activations.back());
  }
  FeatureLoss fl = loss_fn(features);
  require_finite_loss(fl.loss, traces);
  if (fl.dfeatures.size() != inputs.size()) {
    throw ShapeError("loss returned the wrong number of feature gradients");
  }
  Vec grad(model.params().size(), 0.0);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    backward(model, traces[i], fl.dfeatures[i], grad);
  }
  return {fl.loss, ParamVector(std::move(grad))};
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     double lr) {
  require_same_dim(params, grad, "sgd_step");
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = params[i] - lr * grad[i];
  }
  return ParamVector(std::move(out));
}

}  // namespace fedsense::nn
