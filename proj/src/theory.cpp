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

#include "fedsense/theory.hpp"

#include <cmath>
#include <random>

#include "fedsense/error.hpp"
#include "fedsense/rng.hpp"

namespace fedsense::theory {

sim::FederationConfig small_model_config(const sim::FederationConfig& base) {
  sim::FederationConfig cfg = base;
  cfg.data.patch_side = 4;
  cfg.hidden = {8};
  cfg.feature_dim = 4;
  return cfg;
}

void classify_trend(ConvergenceReport& report) {
  report.non_increasing = true;
  report.strictly_decreasing = true;
  for (std::size_t i = 1; i < report.points.size(); ++i) {
    const double prev = report.points[i - 1].mean_grad_norm_sq;
    const double cur = report.points[i].mean_grad_norm_sq;
    if (cur > prev) report.non_increasing = false;
    if (!(cur < prev)) report.strictly_decreasing = false;
  }
}

double horizon_gamma(double gamma, int reference_rounds, int rounds) {
  if (rounds <= 0 || reference_rounds <= 0) {
    throw ParameterError("horizons must be positive");
  }
  return gamma * std::sqrt(static_cast<double>(reference_rounds) / rounds);
}

namespace {

// Running mean; exact when all samples are equal.
struct Mean {
  double value = 0.0;
  int count = 0;
  void add(double x) { value += (x - value) / ++count; }
};

}  // namespace

ConvergenceReport check_convergence(const sim::FederationConfig& cfg,
                                    const std::vector<int>& horizons) {
  ConvergenceReport report;
  for (int t : horizons) {
    sim::FederationConfig run = cfg;
    run.rounds = t;
    run.scg.gamma = horizon_gamma(cfg.scg.gamma, cfg.rounds, t);
    const auto result = sim::run_federation(run);
    Mean mean;
    for (const auto& r : result.records) mean.add(r.global_grad_norm_sq);
    report.points.push_back({t, run.scg.gamma, mean.value});
  }
  classify_trend(report);
  return report;
}

QuadraticProblem QuadraticProblem::random(int clients, int dim, std::uint64_t seed) {
  if (clients <= 0 || dim <= 0) throw ParameterError("quadratic problem needs clients and dim");
  auto rng = make_rng(seed, {kStreamData});
  std::uniform_real_distribution<double> curv(0.5, 2.0);
  std::normal_distribution<double> centre(0.0, 1.0);
  std::uniform_real_distribution<double> size(1.0, 3.0);
  QuadraticProblem p;
  double total = 0.0;
  for (int m = 0; m < clients; ++m) {
    std::vector<double> a(dim), c(dim);
    for (int i = 0; i < dim; ++i) {
      a[i] = curv(rng);
      c[i] = centre(rng);
    }
    p.curvature.push_back(std::move(a));
    p.center.push_back(std::move(c));
    p.weight.push_back(size(rng));
    total += p.weight.back();
  }
  for (auto& w : p.weight) w /= total;
  p.start.assign(static_cast<std::size_t>(dim), 3.0);
  return p;
}

std::vector<double> QuadraticProblem::global_grad(const std::vector<double>& x) const {
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t m = 0; m < weight.size(); ++m) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] += weight[m] * curvature[m][i] * (x[i] - center[m][i]);
    }
  }
  return g;
}

ConvergenceReport check_convergence_quadratic(const QuadraticProblem& problem,
                                              double gamma, int reference_rounds,
                                              int local_steps,
                                              const std::vector<int>& horizons) {
  ConvergenceReport report;
  const std::size_t dim = problem.start.size();
  for (int t : horizons) {
    const double lr = horizon_gamma(gamma, reference_rounds, t);
    std::vector<double> x = problem.start;
    Mean mean;
    for (int round = 0; round < t; ++round) {
      std::vector<double> next(dim, 0.0);
      for (std::size_t m = 0; m < problem.weight.size(); ++m) {
        std::vector<double> local = x;
        for (int s = 0; s < local_steps; ++s) {
          for (std::size_t i = 0; i < dim; ++i) {
            local[i] -= lr * problem.curvature[m][i] * (local[i] - problem.center[m][i]);
          }
        }
        for (std::size_t i = 0; i < dim; ++i) next[i] += problem.weight[m] * local[i];
      }
      x = std::move(next);
      const auto g = problem.global_grad(x);
      double sq = 0.0;
      for (double v : g) sq += v * v;
      mean.add(sq);
    }
    report.points.push_back({t, lr, mean.value});
  }
  classify_trend(report);
  return report;
}

LemmaReport check_lemmas(const sim::FederationConfig& cfg) {
  auto state = sim::init_federation(cfg);
  for (int t = 0; t < cfg.rounds; ++t) sim::run_round(state, cfg);
  const auto& c = state.checks;
  LemmaReport r;
  r.rounds = cfg.rounds;
  r.perturbation_steps = c.perturbation.steps;
  r.drifted_steps = c.perturbation.drifted_steps;
  r.nonzero_perturbations = c.perturbation.nonzero_perturbations;
  r.perturbation_violations = c.perturbation.perturbation_violations;
  r.drifted_norm_misses = c.perturbation.drifted_norm_misses;
  r.max_perturbation_norm = c.perturbation.max_perturbation_norm;
  r.feedback_checks = c.feedback_checks;
  r.feedback_violations = c.feedback_violations;
  r.feedback_max_excess = c.feedback_checks > 0 ? c.feedback_max_excess : 0.0;
  return r;
}

}  // namespace fedsense::theory
