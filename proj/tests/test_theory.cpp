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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsense/error.hpp"
#include "fedsense/nn.hpp"
#include "fedsense/theory.hpp"

using namespace fedsense;

namespace {

sim::FederationConfig quick_config() {
  sim::FederationConfig cfg = theory::small_model_config();
  cfg.clients = 3;
  cfg.rounds = 20;
  cfg.samples_per_client = {24};
  cfg.public_samples = 40;
  cfg.uni_steps = 20;
  cfg.batch_size = 8;
  cfg.distill_batch_size = 8;
  cfg.clusters = 2;
  return cfg;
}

}  // namespace

TEST_CASE("small model stays under 500 parameters") {
  const auto cfg = theory::small_model_config();
  const auto n = nn::EncoderModel::param_count(cfg.layer_dims(), cfg.head_dim());
  CHECK(n <= 500);
  CHECK(theory::kDefaultHorizons == std::vector<int>{25, 100, 400});
}

TEST_CASE("horizon step size") {
  CHECK(theory::horizon_gamma(1.0, 100, 100) == 1.0);
  CHECK(theory::horizon_gamma(1.0, 100, 25) == doctest::Approx(2.0));
  CHECK(theory::horizon_gamma(0.5, 100, 400) == doctest::Approx(0.25));
  CHECK(theory::horizon_gamma(0.0, 100, 400) == 0.0);
  CHECK_THROWS_AS(theory::horizon_gamma(1.0, 0, 10), ParameterError);
  CHECK_THROWS_AS(theory::horizon_gamma(1.0, 10, 0), ParameterError);
}

TEST_CASE("trend classification") {
  theory::ConvergenceReport r;
  r.points = {{25, 1, 3.0}, {100, 1, 2.0}, {400, 1, 2.0}};
  theory::classify_trend(r);
  CHECK(r.non_increasing);
  CHECK_FALSE(r.strictly_decreasing);
  r.points[2].mean_grad_norm_sq = 1.0;
  theory::classify_trend(r);
  CHECK(r.strictly_decreasing);
  r.points[1].mean_grad_norm_sq = 3.5;
  theory::classify_trend(r);
  CHECK_FALSE(r.non_increasing);
}

TEST_CASE("convex quadratic: averaged gradient norm strictly decreases") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const auto q = theory::QuadraticProblem::random(5, 12, seed);
    const auto r = theory::check_convergence_quadratic(q, 0.1, 100, 2);
    REQUIRE(r.points.size() == 3);
    CHECK(r.strictly_decreasing);
  }
}

TEST_CASE("quadratic gradient oracle") {
  const auto q = theory::QuadraticProblem::random(3, 4, 1);
  const std::vector<double> x{0.5, -1.0, 2.0, 0.0};
  const auto g = q.global_grad(x);
  for (int i = 0; i < 4; ++i) {
    double want = 0;
    for (int m = 0; m < 3; ++m) want += q.weight[m] * q.curvature[m][i] * (x[i] - q.center[m][i]);
    CHECK(g[i] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("frozen dynamics give identical averages across horizons") {
  const auto q = theory::QuadraticProblem::random(4, 6, 2);
  const auto rq = theory::check_convergence_quadratic(q, 0.0, 100, 1);
  CHECK(rq.points[0].mean_grad_norm_sq == rq.points[1].mean_grad_norm_sq);
  CHECK(rq.points[1].mean_grad_norm_sq == rq.points[2].mean_grad_norm_sq);

  auto cfg = quick_config();
  cfg.scg.gamma = 0.0;
  const auto r = theory::check_convergence(cfg);
  REQUIRE(r.points.size() == 3);
  CHECK(r.points[0].mean_grad_norm_sq == r.points[1].mean_grad_norm_sq);
  CHECK(r.points[1].mean_grad_norm_sq == r.points[2].mean_grad_norm_sq);
  CHECK(r.non_increasing);
}

TEST_CASE("lemma checks: disabled perturbation") {
  auto cfg = quick_config();
  cfg.scg.lambda = 0.0;
  const auto r = theory::check_lemmas(cfg);
  CHECK(r.nonzero_perturbations == 0);
  CHECK(r.max_perturbation_norm == 0.0);
  CHECK(r.perturbation_violations == 0);
}

TEST_CASE("lemma checks: live runs at 32 and 1 bits") {
  for (int b : {32, 1}) {
    CAPTURE(b);
    auto cfg = quick_config();
    cfg.bits = b;
    const auto r = theory::check_lemmas(cfg);
    CHECK(r.rounds == 20);
    CHECK(r.perturbation_steps > 0);
    CHECK(r.drifted_steps > 0);
    CHECK(r.nonzero_perturbations == r.drifted_steps);
    CHECK(r.feedback_checks == cfg.clients * cfg.rounds);
    CHECK(r.feedback_violations == 0);
    CHECK(r.passed());
    CHECK(r.max_perturbation_norm <= cfg.scg.lambda + 1e-9);
  }
}
