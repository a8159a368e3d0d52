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

// Empirical checks of the convergence trend and the perturbation and
// feedback-error bounds.

#pragma once

#include <cstdint>
#include <vector>

#include "fedsense/sim.hpp"

namespace fedsense::theory {

inline const std::vector<int> kDefaultHorizons = {25, 100, 400};

/// A configuration with at most 500 parameters: 4x4 patches, one hidden
/// layer of 8 units, 4 features. Everything else is taken from `base`.
sim::FederationConfig small_model_config(const sim::FederationConfig& base = {});

struct ConvergencePoint {
  int rounds = 0;
  double gamma = 0.0;
  double mean_grad_norm_sq = 0.0;  // (1/T) sum_t ||grad L(Theta^t)||^2
};

struct ConvergenceReport {
  std::vector<ConvergencePoint> points;
  bool non_increasing = false;
  bool strictly_decreasing = false;
};

/// Fills the trend flags from `points` (ordered by increasing horizon).
void classify_trend(ConvergenceReport& report);

/// Step size for horizon T when `gamma` is tuned for `reference_rounds`:
/// gamma * sqrt(reference_rounds / T).
double horizon_gamma(double gamma, int reference_rounds, int rounds);

/// Runs one federation per horizon with the step size rescaled by
/// horizon_gamma (reference: cfg.rounds) and averages the recorded full-batch
/// squared gradient norm of the global objective.
ConvergenceReport check_convergence(const sim::FederationConfig& cfg,
                                    const std::vector<int>& horizons = kDefaultHorizons);

/// Federated quadratic: client m holds 0.5 * sum_i a_mi (x_i - c_mi)^2.
struct QuadraticProblem {
  std::vector<std::vector<double>> curvature;
  std::vector<std::vector<double>> center;
  std::vector<double> weight;
  std::vector<double> start;

  static QuadraticProblem random(int clients, int dim, std::uint64_t seed);
  std::vector<double> global_grad(const std::vector<double>& x) const;
};

/// FedAvg with `local_steps` full-gradient steps per round on the quadratic,
/// same horizon and step-size schedule as check_convergence.
ConvergenceReport check_convergence_quadratic(const QuadraticProblem& problem,
                                              double gamma, int reference_rounds,
                                              int local_steps,
                                              const std::vector<int>& horizons = kDefaultHorizons);

struct LemmaReport {
  int rounds = 0;
  int perturbation_steps = 0;
  int drifted_steps = 0;
  int nonzero_perturbations = 0;
  int perturbation_violations = 0;  // ||eps|| > lambda
  int drifted_norm_misses = 0;      // drifted steps with ||eps|| != lambda
  double max_perturbation_norm = 0.0;
  int feedback_checks = 0;
  int feedback_violations = 0;
  double feedback_max_excess = 0.0;

  bool passed() const {
    return perturbation_violations == 0 && drifted_norm_misses == 0 &&
           feedback_violations == 0;
  }
};

/// Runs cfg.rounds rounds and collects the per-step perturbation checks and
/// the per-round feedback-error bound checks.
LemmaReport check_lemmas(const sim::FederationConfig& cfg);

}  // namespace fedsense::theory
