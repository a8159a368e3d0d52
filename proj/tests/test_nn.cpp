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
#include <limits>

#include "fedsense/checkpoint.hpp"
#include "fedsense/error.hpp"
#include "fedsense/nn.hpp"
#include "support.hpp"

using namespace fedsense;
using nn::EncoderModel;
using nn::Vec;

TEST_CASE("param count follows the layer layout") {
  CHECK(EncoderModel::param_count({2, 2}) == 6);
  CHECK(EncoderModel::param_count({64, 32, 8}) == 64 * 32 + 32 + 32 * 8 + 8);
  CHECK(EncoderModel::param_count({4, 3}, 4) == 15 + 3 * 4 + 4);
  CHECK_THROWS_AS(EncoderModel({2, 2}, ParamVector(5)), ShapeError);
}

TEST_CASE("forward: identity weights pass the input through") {
  EncoderModel m({2, 2}, ParamVector{1, 0, 0, 1, 0, 0});
  const Vec x{1, 0};
  const Vec y = nn::forward(m, x);
  CHECK(y == Vec{1, 0});
}

TEST_CASE("forward: zero parameters give a zero feature") {
  const auto m = EncoderModel::zeros({5, 4, 3});
  const Vec x{0.3, -1, 2, 7, 0.1};
  for (double v : nn::forward(m, x)) CHECK(v == 0.0);
}

TEST_CASE("forward: two layers against a hand-unrolled oracle") {
  // W1 (2x2), b1, W2 (1x2), b2
  const ParamVector p{0.5, -0.25, 0.75, 1.0, 0.1, -0.2, 2.0, -1.5, 0.3};
  EncoderModel m({2, 2, 1}, p);
  const Vec x{1, 1};
  const double h0 = std::tanh(0.5 * 1 + -0.25 * 1 + 0.1);
  const double h1 = std::tanh(0.75 * 1 + 1.0 * 1 - 0.2);
  const double want = 2.0 * h0 - 1.5 * h1 + 0.3;
  const Vec y = nn::forward(m, x);
  REQUIRE(y.size() == 1);
  CHECK(y[0] == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("forward: wrong input dimension is a shape error") {
  const auto m = EncoderModel::zeros({3, 2});
  const Vec x{1, 2};
  CHECK_THROWS_AS(nn::forward(m, x), ShapeError);
}

TEST_CASE("forward is pure") {
  auto rng = std::mt19937_64(11);
  const auto m = EncoderModel::random({6, 5, 3}, 0, rng);
  const auto x = testing::random_vector(6, rng).raw();
  CHECK(nn::forward(m, x) == nn::forward(m, x));
}

namespace {

nn::FeatureLoss half_sq_norm(std::span<const Vec> feats) {
  nn::FeatureLoss out;
  for (const auto& f : feats) {
    for (double v : f) out.loss += 0.5 * v * v;
    out.dfeatures.push_back(f);
  }
  return out;
}

nn::FeatureLoss first_coordinate(std::span<const Vec> feats) {
  nn::FeatureLoss out;
  for (const auto& f : feats) {
    out.loss += f[0];
    Vec d(f.size(), 0.0);
    d[0] = 1.0;
    out.dfeatures.push_back(d);
  }
  return out;
}

// 1 - cos(f(x0), f(x1)) with the stabilized norms used throughout.
nn::FeatureLoss pair_cosine(std::span<const Vec> feats) {
  const auto c = ssl::cosine_with_grad(feats[0], feats[1]);
  nn::FeatureLoss out;
  out.loss = 1.0 - c.cosine;
  Vec da(c.d_a.size()), db(c.d_b.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    da[i] = -c.d_a[i];
    db[i] = -c.d_b[i];
  }
  out.dfeatures = {da, db};
  return out;
}

double eval_loss(const EncoderModel& shape, const ParamVector& p, std::span<const Vec> xs,
                 const nn::FeatureLossFn& fn) {
  const auto m = shape.with_params(p);
  std::vector<Vec> feats;
  for (const auto& x : xs) feats.push_back(nn::forward(m, x));
  return fn(feats).loss;
}

}  // namespace

TEST_CASE("loss_and_grad: zero parameters and half squared norm") {
  const auto m = EncoderModel::zeros({4, 3, 2});
  const std::vector<Vec> xs{{1, 2, 3, 4}};
  const auto r = nn::loss_and_grad(m, xs, half_sq_norm);
  CHECK(r.loss == 0.0);
  for (double g : r.grad.values()) CHECK(g == 0.0);
}

TEST_CASE("loss_and_grad: single layer first coordinate is the input pattern") {
  auto rng = std::mt19937_64(3);
  const auto m = EncoderModel::random({3, 2}, 0, rng);
  const std::vector<Vec> xs{{0.5, -1.0, 2.0}};
  const auto r = nn::loss_and_grad(m, xs, first_coordinate);
  // d f0 / d W[0][j] = x_j, d f0 / d b0 = 1, everything else 0.
  const ParamVector want{0.5, -1.0, 2.0, 0, 0, 0, 1, 0};
  CHECK(r.grad == want);
  const auto fd = testing::fd_gradient(
      [&](const ParamVector& p) { return eval_loss(m, p, xs, first_coordinate); }, m.params());
  CHECK(testing::max_rel_error(r.grad, fd) < testing::kFdRelTol);
}

TEST_CASE("loss_and_grad: three layer cosine loss matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    auto rng = std::mt19937_64(seed);
    const auto m = EncoderModel::random({6, 5, 4, 3}, 0, rng);
    const std::vector<Vec> xs{testing::random_vector(6, rng).raw(),
                              testing::random_vector(6, rng).raw()};
    const auto r = nn::loss_and_grad(m, xs, pair_cosine);
    const auto fd = testing::fd_gradient(
        [&](const ParamVector& p) { return eval_loss(m, p, xs, pair_cosine); }, m.params());
    CHECK(testing::max_rel_error(r.grad, fd) < testing::kFdRelTol);
  }
}

TEST_CASE("loss_and_grad: non-finite loss names the offending layer") {
  std::vector<double> p(EncoderModel::param_count({2, 2, 2}), 0.0);
  EncoderModel m({2, 2, 2}, ParamVector(p));
  const std::vector<Vec> xs{{std::numeric_limits<double>::infinity(), 0.0}};
  // tanh(inf * 0) is NaN in the first hidden layer.
  std::vector<double> q = p;
  q[0] = 1.0;
  const auto bad = m.with_params(ParamVector(q));
  try {
    nn::loss_and_grad(bad, xs, half_sq_norm);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(e.layer() >= 0);
  }
}

TEST_CASE("sgd_step examples") {
  CHECK(nn::sgd_step({1, 2}, {0, 0}, 0.1) == ParamVector{1, 2});
  CHECK(nn::sgd_step({1, 2}, {1, 1}, 0.5) == ParamVector{0.5, 1.5});
  CHECK_THROWS_AS(nn::sgd_step({1, 2}, {1}, 0.5), ShapeError);
  CHECK_THROWS_AS(nn::sgd_step({1, 2}, {1, 1}, 0.0), ParameterError);
}

TEST_CASE("sgd_step: elementwise oracle and linearity") {
  auto rng = std::mt19937_64(5);
  const auto p = testing::random_vector(100, rng);
  const auto g1 = testing::random_vector(100, rng);
  const auto g2 = testing::random_vector(100, rng);
  const auto out = nn::sgd_step(p, g1, 0.3);
  for (std::size_t i = 0; i < 100; ++i) CHECK(out[i] == p[i] - 0.3 * g1[i]);
  const auto once = nn::sgd_step(p, g1 + g2, 0.3);
  const auto twice = nn::sgd_step(nn::sgd_step(p, g1, 0.3), g2, 0.3);
  for (std::size_t i = 0; i < 100; ++i) CHECK(once[i] == doctest::Approx(twice[i]).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip is bit exact at f32") {
  auto rng = std::mt19937_64(9);
  const auto src = testing::random_vector(37, rng);
  std::vector<double> v;
  for (double x : src.values()) v.push_back(static_cast<float>(x));
  const ParamVector p(v);
  const auto bytes = encode_checkpoint(p);
  CHECK(bytes.size() == 4 + 1 + 4 + 37 * 4);
  CHECK(bytes[0] == 'F');
  CHECK(bytes[3] == 'S');
  CHECK(bytes[4] == 1);
  CHECK(decode_checkpoint(bytes) == p);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
}
