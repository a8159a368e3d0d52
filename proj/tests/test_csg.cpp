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

#include "fedsense/csg.hpp"
#include "fedsense/error.hpp"
#include "support.hpp"

using namespace fedsense;
using csg::FeedbackState;
using csg::QuantizedUpdate;

TEST_CASE("level counts and widths") {
  CHECK(csg::level_count(1) == 1);
  CHECK(csg::level_count(2) == 1);
  CHECK(csg::level_count(3) == 3);
  CHECK(csg::level_count(8) == 127);
  CHECK(csg::level_width(1) == 1);
  CHECK(csg::level_width(2) == 1);
  CHECK(csg::level_width(4) == 3);
  CHECK(csg::level_width(8) == 7);
  CHECK(csg::level_width(16) == 15);
  CHECK_THROWS_AS(csg::level_count(0), ParameterError);
  CHECK_THROWS_AS(csg::level_count(33), ParameterError);
}

TEST_CASE("compensate examples") {
  const auto zero = FeedbackState::zeros(2, 0.9, 10);
  CHECK(csg::compensate({1, -1}, zero) == ParamVector{1, -1});
  auto fb = zero;
  fb.error = ParamVector{0.5, 0.5};
  CHECK(csg::compensate({1, -1}, fb) == ParamVector{1.5, -0.5});
  auto rng = std::mt19937_64(2);
  const auto d = testing::random_vector(200, rng);
  auto big = FeedbackState::zeros(200, 0.9, 10);
  big.error = testing::random_vector(200, rng);
  const auto g = csg::compensate(d, big);
  for (std::size_t i = 0; i < 200; ++i) CHECK(g[i] == d[i] + big.error[i]);
  CHECK_THROWS_AS(csg::compensate({1}, zero), ShapeError);
}

TEST_CASE("cpr: zero vector at every width") {
  auto rng = std::mt19937_64(0);
  for (int b = 1; b < 32; ++b) {
    const auto q = csg::cpr(ParamVector(5), b, rng);
    CHECK(q.norm == 0.0);
    for (auto l : q.levels) CHECK(l == 0);
    CHECK(testing::is_zero(csg::dcpr(q)));
  }
}

TEST_CASE("cpr: on-grid value is exact for bits >= 2") {
  auto rng = std::mt19937_64(0);
  for (int b = 2; b <= 32; ++b) {
    CAPTURE(b);
    CHECK(csg::dcpr(csg::cpr({1, 0}, b, rng)) == ParamVector{1, 0});
  }
}

TEST_CASE("cpr: levels within s and signs recorded") {
  auto rng = std::mt19937_64(4);
  const auto g = testing::random_vector(300, rng);
  for (int b : {1, 2, 3, 5, 8, 12}) {
    const auto q = csg::cpr(g, b, rng);
    CHECK(q.level_count == csg::level_count(b));
    for (std::size_t i = 0; i < 300; ++i) {
      CHECK(q.levels[i] <= q.level_count);
      CHECK(q.signs[i] == (g[i] < 0.0 ? 1 : 0));
    }
    CHECK(q.norm == static_cast<double>(static_cast<float>(norm_l2(g))));
  }
}

TEST_CASE("cpr: invalid widths rejected") {
  auto rng = std::mt19937_64(0);
  CHECK_THROWS_AS(csg::cpr({1, 2}, 0, rng), ParameterError);
  CHECK_THROWS_AS(csg::cpr({1, 2}, 33, rng), ParameterError);
}

TEST_CASE("cpr: Monte-Carlo mean of (3,4) at 8 bits") {
  auto rng = std::mt19937_64(17);
  const ParamVector g{3, 4};
  const int n = 100000;
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  for (int k = 0; k < n; ++k) {
    const auto d = csg::dcpr(csg::cpr(g, 8, rng));
    for (int i = 0; i < 2; ++i) {
      sum[i] += d[i];
      sq[i] += d[i] * d[i];
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double mean = sum[i] / n;
    const double var = sq[i] / n - mean * mean;
    const double se = std::sqrt(std::max(var, 0.0) / n);
    CHECK(std::abs(mean - g[i]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("cpr: deterministic rounding is nearest level and draws nothing") {
  auto a = std::mt19937_64(3);
  auto b = std::mt19937_64(3);
  const ParamVector g{0.3, -0.9, 0.2, 0.1};
  const auto q = csg::cpr(g, 3, a, csg::Rounding::kDeterministic);
  CHECK(a == b);
  const double n = q.norm;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(q.levels[i] == static_cast<std::uint32_t>(std::lround(std::abs(g[i]) / n * 3)));
  }
}

TEST_CASE("dcpr: zero levels and saturated level") {
  QuantizedUpdate q;
  q.bits = 4;
  q.level_count = 7;
  q.norm = 5.0;
  q.signs = {0, 1, 0};
  q.levels = {0, 0, 0};
  CHECK(testing::is_zero(csg::dcpr(q)));
  q.levels = {7, 0, 0};
  CHECK(csg::dcpr(q) == ParamVector{5, 0, 0});
  q.levels = {7, 7, 0};
  CHECK(csg::dcpr(q) == ParamVector{5, -5, 0});
}

TEST_CASE("dcpr: one bit is a norm-preserving scaled sign") {
  auto rng = std::mt19937_64(21);
  const auto g = testing::random_vector(64, rng);
  const auto q = csg::cpr(g, 1, rng);
  const auto d = csg::dcpr(q);
  const double unit = q.norm / 8.0;
  for (std::size_t i = 0; i < 64; ++i) CHECK(d[i] == doctest::Approx(g[i] < 0 ? -unit : unit));
  CHECK(norm_l2(d) == doctest::Approx(q.norm).epsilon(1e-12));
  // Rounding mode makes no difference at one bit.
  auto r2 = std::mt19937_64(0);
  CHECK(csg::cpr(g, 1, r2, csg::Rounding::kDeterministic).levels == q.levels);
}

TEST_CASE("cpr/dcpr at 32 bits is lossless at f32") {
  auto rng = std::mt19937_64(6);
  const auto src = testing::random_vector(77, rng);
  std::vector<double> v;
  for (double x : src.values()) v.push_back(static_cast<float>(x));
  const ParamVector g(v);
  CHECK(csg::dcpr(csg::cpr(g, 32, rng)) == g);
}

TEST_CASE("update_feedback: no momentum keeps the instantaneous error") {
  auto rng = std::mt19937_64(8);
  const auto g = testing::random_vector(30, rng);
  const auto q = csg::cpr(g, 3, rng);
  auto fb = FeedbackState::zeros(30, 0.0, 10);
  fb.error = testing::random_vector(30, rng);
  const auto next = csg::update_feedback(fb, g, q);
  const auto inst = g - csg::dcpr(q);
  CHECK(next.error == inst);
  CHECK(next.rounds_since_reset == 1);
}

TEST_CASE("update_feedback: lossless uplink decays the error geometrically") {
  auto rng = std::mt19937_64(9);
  auto fb = FeedbackState::zeros(12, 0.7, 100);
  fb.error = testing::random_vector(12, rng);
  const auto e0 = fb.error;
  for (int t = 1; t <= 8; ++t) {
    const auto src = testing::random_vector(12, rng);
    std::vector<double> v;
    for (double x : src.values()) v.push_back(static_cast<float>(x));
    const ParamVector g(v);
    fb = csg::update_feedback(fb, g, csg::cpr(g, 32, rng));
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(fb.error[i] == doctest::Approx(std::pow(0.7, t) * e0[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("update_feedback: unrolled recursion over five rounds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = std::mt19937_64(seed);
    const double a = 0.5;
    auto fb = FeedbackState::zeros(16, a, 100);
    fb.error = testing::random_vector(16, rng);
    const auto e0 = fb.error;
    std::vector<ParamVector> inst;
    for (int t = 1; t <= 5; ++t) {
      const auto g = testing::random_vector(16, rng);
      const auto q = csg::cpr(g, 2, rng);
      inst.push_back(g - csg::dcpr(q));
      fb = csg::update_feedback(fb, g, q);
      for (std::size_t i = 0; i < 16; ++i) {
        double want = std::pow(a, t) * e0[i];
        for (int k = 1; k <= t; ++k) want += (1 - a) * std::pow(a, t - k) * inst[k - 1][i];
        CHECK(std::abs(fb.error[i] - want) < 1e-9);
      }
    }
  }
}

TEST_CASE("update_feedback: periodic reset") {
  auto rng = std::mt19937_64(1);
  auto fb = FeedbackState::zeros(8, 0.9, 3);
  for (int t = 1; t <= 7; ++t) {
    const auto g = testing::random_vector(8, rng);
    csg::FeedbackTrace trace;
    fb = csg::update_feedback(fb, g, csg::cpr(g, 1, rng), &trace);
    CHECK(fb.rounds_since_reset < fb.reset_period);
    CHECK(trace.reset == (t % 3 == 0));
    if (t % 3 == 0) CHECK(testing::is_zero(fb.error));
    else CHECK_FALSE(testing::is_zero(fb.error));
  }
}

TEST_CASE("feedback bound holds along a quantized sequence") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = std::mt19937_64(seed);
    const double a = 0.9;
    auto fb = FeedbackState::zeros(40, a, 1000);
    fb.error = testing::random_vector(40, rng, 0.1);
    double bound = norm_l2(fb.error);
    for (int t = 1; t <= 50; ++t) {
      const auto g = testing::random_vector(40, rng);
      csg::FeedbackTrace trace;
      fb = csg::update_feedback(fb, g, csg::cpr(g, 1, rng), &trace);
      bound = a * bound + (1 - a) * trace.instantaneous_norm;
      CHECK(norm_l2(fb.error) <= bound + 1e-9);
    }
  }
}

namespace {

// 100 steps of compressed gradient descent on 0.5 * sum a_i (x_i - c_i)^2
// with one-bit updates and the default feedback settings; returns the final
// loss.
double one_bit_descent(std::uint64_t seed, bool feedback) {
  auto rng = std::mt19937_64(seed);
  const std::size_t d = 100;
  std::uniform_real_distribution<double> curv(0.05, 1.0);
  std::vector<double> a(d), c(d), x(d, 0.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < d; ++i) {
    a[i] = curv(rng);
    c[i] = n(rng);
  }
  auto qrng = std::mt19937_64(seed + 1000);
  auto fb = FeedbackState::zeros(d, 0.9, 10);
  const double lr = 0.1;
  auto loss = [&] {
    double l = 0;
    for (std::size_t i = 0; i < d; ++i) l += 0.5 * a[i] * (x[i] - c[i]) * (x[i] - c[i]);
    return l;
  };
  for (int t = 0; t < 100; ++t) {
    std::vector<double> step(d);
    for (std::size_t i = 0; i < d; ++i) step[i] = -lr * a[i] * (x[i] - c[i]);
    const ParamVector delta(step);
    const ParamVector g = feedback ? csg::compensate(delta, fb) : delta;
    const auto q = csg::cpr(g, 1, qrng);
    const auto applied = csg::dcpr(q);
    for (std::size_t i = 0; i < d; ++i) x[i] += applied[i];
    if (feedback) fb = csg::update_feedback(fb, g, q);
  }
  return loss();
}

}  // namespace

TEST_CASE("error feedback helps one-bit descent on a quadratic") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double with = one_bit_descent(seed, true);
    const double without = one_bit_descent(seed, false);
    MESSAGE("seed " << seed << ": feedback " << with << ", none " << without);
    if (with < without) ++wins;
  }
  CHECK(wins >= 8);
}

TEST_CASE("wire sizes follow the layout") {
  CHECK(csg::wire_size(8, 1) == 4 + 1 + 4 + 4 + 1 + 1);
  CHECK(csg::wire_header_size(8) == 13);
  CHECK(csg::wire_header_size(32) == 9);
  for (std::size_t d : {1u, 7u, 8u, 9u, 100u, 2920u}) {
    for (int b = 1; b <= 32; ++b) {
      const std::size_t s = b == 32 ? 0 : std::max((1u << (b - 1)) - 1, 1u);
      std::size_t w = 0;
      while ((std::size_t{1} << w) < s + 1) ++w;
      const std::size_t want = b == 32 ? 9 + 4 * d : 13 + (d + 7) / 8 + (d * w + 7) / 8;
      CHECK(csg::wire_size(d, b) == want);
    }
  }
}

TEST_CASE("wire round trip on 100 random updates") {
  auto rng = std::mt19937_64(12);
  std::uniform_int_distribution<int> bits(1, 32);
  std::uniform_int_distribution<int> dims(1, 90);
  for (int k = 0; k < 100; ++k) {
    const int b = bits(rng);
    const auto g = testing::random_vector(static_cast<std::size_t>(dims(rng)), rng);
    const auto q = csg::cpr(g, b, rng);
    const auto bytes = csg::encode_wire(q);
    CHECK(bytes.size() == csg::wire_size(g.size(), b));
    CHECK(csg::decode_wire(bytes) == q);
  }
}

TEST_CASE("wire: malformed input rejected") {
  auto rng = std::mt19937_64(1);
  const auto bytes = csg::encode_wire(csg::cpr({1, -2, 3}, 4, rng));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(csg::decode_wire(bad), FormatError);
  bad = bytes;
  bad[4] = 40;
  CHECK_THROWS_AS(csg::decode_wire(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(csg::decode_wire(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(csg::decode_wire(bad), FormatError);
  QuantizedUpdate empty;
  empty.bits = 4;
  empty.level_count = 7;
  CHECK_THROWS_AS(csg::encode_wire(empty), ParameterError);
  bad = bytes;
  bad[5] = bad[6] = bad[7] = bad[8] = 0;
  CHECK_THROWS_AS(csg::decode_wire(bad), FormatError);
}
