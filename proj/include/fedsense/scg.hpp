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

// Server-to-clients guidance: discrepancy-maximizing weight perturbation,
// self-stabilized alignment with a frozen universal encoder, and the
// perturbed local update.

#pragma once

#include <random>
#include <span>

#include "fedsense/client_state.hpp"
#include "fedsense/nn.hpp"
#include "fedsense/ssl.hpp"

namespace fedsense::scg {

struct ScgConfig {
  double beta = 0.1;        // discrepancy weight
  double lambda = 0.05;     // perturbation scale
  double rho = 0.05;        // perturbation-norm budget, lambda <= rho
  double gamma = 1.0;       // local learning rate; 0 freezes the client
  double sst_weight = 0.1;  // weight on the self-stabilized term

  void validate() const;
};

struct Perturbation {
  ParamVector epsilon;
};

/// Gradient norms below this yield the zero perturbation.
inline constexpr double kDegenerateGradNorm = 1e-12;

/// beta * (theta_m - theta_global).
ParamVector discrepancy_grad(const ParamVector& theta_m,
                             const ParamVector& theta_global, double beta);

/// beta/2 * ||theta_m - theta_global||^2, whose gradient is discrepancy_grad.
nn::GradResult discrepancy_loss(const ParamVector& theta_m,
                                const ParamVector& theta_global, double beta);

/// lambda * g / ||g|| for g = discrepancy_grad, or zero when ||g|| < 1e-12.
Perturbation optimal_perturbation(const ParamVector& theta_m,
                                  const ParamVector& theta_global,
                                  const ScgConfig& cfg);

/// mean over the batch of -cos(f_model(x), f_uni(x)); `uni` is frozen.
nn::GradResult sst_loss(const nn::EncoderModel& model,
                        const nn::EncoderModel& uni,
                        std::span<const ssl::Sample> batch);

struct LocalOptions {
  ssl::Mode mode = ssl::Mode::kMasked;
  int batch_size = 32;
  double mask_ratio = 0.5;
};

/// Running statistics of local training, including the per-step check that
/// the realized perturbation has norm lambda (or is zero) and stays in the
/// rho-ball.
struct EpochStats {
  int steps = 0;
  double ssl_loss_sum = 0.0;
  double sst_loss_sum = 0.0;
  double max_perturbation_norm = 0.0;
  int nonzero_perturbations = 0;
  int drifted_steps = 0;  // steps with ||theta_m - theta_global|| > 1e-12
  int drifted_norm_misses = 0;  // drifted steps where ||eps|| != lambda
  int perturbation_violations = 0;

  void merge(const EpochStats& other);
};

/// One pass over the client's shard in shuffled mini-batches. For each batch:
/// perturb, take the gradient of L_ssl + sst_weight * L_sst at the perturbed
/// point, and step the unperturbed parameters.
ClientState local_train_epoch(ClientState client,
                              const ParamVector& theta_global,
                              const nn::EncoderModel& uni, const ScgConfig& cfg,
                              const LocalOptions& opts, std::mt19937_64& rng,
                              EpochStats* stats = nullptr);

}  // namespace fedsense::scg
