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

#include "fedsense/scg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsense/error.hpp"

namespace fedsense::scg {

void ScgConfig::validate() const {
  if (!(beta >= 0.0)) throw ParameterError("scg.beta must be >= 0");
  if (!(lambda >= 0.0)) throw ParameterError("scg.lambda must be >= 0");
  if (!(rho > 0.0)) throw ParameterError("scg.rho must be > 0");
  if (!(gamma >= 0.0)) throw ParameterError("scg.gamma must be >= 0");
  if (!(sst_weight >= 0.0)) throw ParameterError("scg.sst_weight must be >= 0");
  if (lambda > rho) throw ParameterError("scg.lambda must not exceed scg.rho");
}

void EpochStats::merge(const EpochStats& o) {
  steps += o.steps;
  ssl_loss_sum += o.ssl_loss_sum;
  sst_loss_sum += o.sst_loss_sum;
  max_perturbation_norm = std::max(max_perturbation_norm, o.max_perturbation_norm);
  nonzero_perturbations += o.nonzero_perturbations;
  drifted_steps += o.drifted_steps;
  drifted_norm_misses += o.drifted_norm_misses;
  perturbation_violations += o.perturbation_violations;
}

ParamVector discrepancy_grad(const ParamVector& theta_m,
                             const ParamVector& theta_global, double beta) {
  require_same_dim(theta_m, theta_global, "discrepancy_grad");
  std::vector<double> g(theta_m.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = beta * (theta_m[i] - theta_global[i]);
  }
  return ParamVector(std::move(g));
}

nn::GradResult discrepancy_loss(const ParamVector& theta_m,
                                const ParamVector& theta_global, double beta) {
  const ParamVector diff = theta_m - theta_global;
  return {0.5 * beta * dot(diff, diff), beta * diff};
}

Perturbation optimal_perturbation(const ParamVector& theta_m,
                                  const ParamVector& theta_global,
                                  const ScgConfig& cfg) {
  const ParamVector g = discrepancy_grad(theta_m, theta_global, cfg.beta);
  const double n = norm_l2(g);
  if (n < kDegenerateGradNorm || cfg.lambda == 0.0) {
    return {ParamVector(g.size())};
  }
  return {(cfg.lambda / n) * g};
}

nn::GradResult sst_loss(const nn::EncoderModel& model,
                        const nn::EncoderModel& uni,
                        std::span<const ssl::Sample> batch) {
  if (batch.empty()) throw ParameterError("sst_loss needs a non-empty batch");
  if (model.input_dim() != uni.input_dim() ||
      model.feature_dim() != uni.feature_dim()) {
    throw ShapeError("model and universal encoder disagree on dimensions");
  }
  std::vector<nn::Vec> inputs;
  std::vector<nn::Vec> targets;
  inputs.reserve(batch.size());
  targets.reserve(batch.size());
  for (const auto& s : batch) {
    inputs.push_back(s.pixels);
    targets.push_back(nn::forward(uni, s.pixels));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  return nn::loss_and_grad(model, inputs, [&](std::span<const nn::Vec> f) {
    nn::FeatureLoss out;
    out.dfeatures.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      auto cg = ssl::cosine_with_grad(f[i], targets[i]);
      out.loss -= cg.cosine * inv;
      out.dfeatures[i] = std::move(cg.d_a);
      for (auto& g : out.dfeatures[i]) g *= -inv;
    }
    return out;
  });
}

ClientState local_train_epoch(ClientState client,
                              const ParamVector& theta_global,
                              const nn::EncoderModel& uni, const ScgConfig& cfg,
                              const LocalOptions& opts, std::mt19937_64& rng,
                              EpochStats* stats) {
  require_same_dim(client.model.params(), theta_global, "local_train_epoch");
  if (opts.batch_size <= 0) throw ParameterError("batch size must be positive");
  const auto& samples = client.shard.samples;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  ParamVector theta = client.model.params();
  EpochStats local;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
    std::vector<ssl::Sample> batch;
    std::vector<ssl::ViewPair> views;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(samples[order[i]]);
      views.push_back(ssl::make_views(batch.back(), opts.mode, opts.mask_ratio, rng));
    }

    const Perturbation eps = optimal_perturbation(theta, theta_global, cfg);
    const double eps_norm = norm_l2(eps.epsilon);
    const double drift = norm_l2(theta - theta_global);
    const double gnorm = cfg.beta * drift;
    local.max_perturbation_norm = std::max(local.max_perturbation_norm, eps_norm);
    const bool active = gnorm >= kDegenerateGradNorm && cfg.lambda > 0.0;
    if (active) ++local.nonzero_perturbations;
    const bool norm_ok = active ? std::abs(eps_norm - cfg.lambda) <= 1e-9
                                : eps_norm == 0.0;
    if (!norm_ok || eps_norm > cfg.rho + 1e-9) ++local.perturbation_violations;
    if (drift > 1e-12) {
      ++local.drifted_steps;
      if (std::abs(eps_norm - cfg.lambda) > 1e-9) ++local.drifted_norm_misses;
    }

    const nn::EncoderModel probe_point =
        active ? client.model.with_params(theta + eps.epsilon)
               : client.model.with_params(theta);
    const nn::GradResult g_ssl = ssl::ssl_loss(probe_point, views, opts.mode);
    ParamVector total = g_ssl.grad;
    double sst_value = 0.0;
    if (cfg.sst_weight > 0.0) {
      const nn::GradResult g_sst = sst_loss(probe_point, uni, batch);
      total = total + cfg.sst_weight * g_sst.grad;
      sst_value = g_sst.loss;
    }
    if (cfg.gamma > 0.0) theta = nn::sgd_step(theta, total, cfg.gamma);

    ++local.steps;
    local.ssl_loss_sum += g_ssl.loss;
    local.sst_loss_sum += sst_value;
  }
  client.model = client.model.with_params(std::move(theta));
  if (stats) stats->merge(local);
  return client;
}

}  // namespace fedsense::scg
