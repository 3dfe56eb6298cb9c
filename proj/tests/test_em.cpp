/*
 * Copyright 2026 The geopath Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>

#include "doctest.h"
#include "geopath/em.hpp"
#include "geopath/errors.hpp"
#include "support.hpp"

using namespace geopath;
using namespace geopath::em;

namespace {

// Exact OU chain dX = -theta X dt + sigma dW observed every tau.
sde::ObservationSet ou_observations(int K, double theta, double sigma, double tau,
                                    int tau_steps, std::uint64_t seed) {
  Rng rng(seed);
  const double decay = std::exp(-theta * tau);
  const double sd = sigma * std::sqrt((1.0 - decay * decay) / (2.0 * theta));
  sde::ObservationSet obs;
  obs.states.resize(K, 1);
  obs.states(0, 0) = sigma / std::sqrt(2.0 * theta) * rng.normal();
  for (int k = 1; k < K; ++k) obs.states(k, 0) = decay * obs.states(k - 1, 0) + sd * rng.normal();
  obs.tau_steps = tau_steps;
  obs.dt = tau / tau_steps;
  obs.times = Vector::LinSpaced(K, 0.0, tau * (K - 1));
  return obs;
}

EMConfig small_config(int dim, double sigma) {
  EMConfig cfg;
  cfg.kernel = KernelSpec::isotropic(dim, 1.5, 4.0);
  cfg.sigma = Vector::Constant(dim, sigma);
  cfg.particles = 60;
  cfg.score_inducing = 20;
  cfg.mstep_inducing = 50;
  cfg.bridge_samples = 20;
  cfg.beta = 0.0;
  cfg.seed = 3;
  return cfg;
}

// Near-exact interpolant of f(x) = -x on [-3, 3].
gp::DriftField linear_drift_field() {
  const Points X = Vector::LinSpaced(61, -3.0, 3.0);
  const Matrix Y = -X;
  return gp::girsanov_gp_fit(X, Y, 1.0, KernelSpec::isotropic(1, 1.0, 4.0),
                             Vector::Constant(1, 1e-3), 1);
}

gp::WeightedStateData linear_data(int n, std::uint64_t seed) {
  gp::WeightedStateData d;
  d.points = test::normal_points(n, 1, seed);
  d.responses = -d.points;
  d.weights = Vector::Constant(n, 0.01);
  return d;
}

}  // namespace

TEST_SUITE("em") {

TEST_CASE("configuration checks") {
  EMConfig cfg = small_config(2, 0.5);
  CHECK_NOTHROW(cfg.validate(2));
  CHECK_THROWS_AS(cfg.validate(1), InvalidParameter);
  cfg.max_iterations = -1;
  CHECK_THROWS_AS(cfg.validate(2), InvalidParameter);
  cfg = small_config(2, 0.5);
  cfg.score_inducing = cfg.particles + 1;
  CHECK_THROWS_AS(cfg.validate(2), InvalidParameter);
  cfg = small_config(2, 0.5);
  cfg.beta = -0.1;
  CHECK_THROWS_AS(cfg.validate(2), InvalidParameter);
  CHECK(augmentation_from_string(to_string(Augmentation::ou)) == Augmentation::ou);
  CHECK_THROWS_AS(augmentation_from_string("spline"), InvalidParameter);
}

TEST_CASE("initial fit recovers the discrete-time slope of a linear system") {
  // Increments over tau of an OU process regress on x with slope
  // -(1 - exp(-theta tau)) / tau; near tau -> 0 this is the drift itself.
  for (double tau : {0.1, 1.0}) {
    CAPTURE(tau);
    const auto obs = ou_observations(3000, 1.0, 1.0, tau, 10, 21);
    const auto f = initial_fit(obs, KernelSpec::isotropic(1, 3.0, 4.0), Vector::Constant(1, 1.0));
    const double slope = (f.evaluate(Vector(Vector::Constant(1, 0.5)))(0) -
                          f.evaluate(Vector(Vector::Constant(1, -0.5)))(0));
    const double expected = -(1.0 - std::exp(-tau)) / tau;
    CHECK(slope == doctest::Approx(expected).epsilon(0.1));
  }
}

TEST_CASE("initial fit from a single increment") {
  sde::ObservationSet obs;
  obs.states.resize(2, 2);
  obs.states << 0.3, -0.2, 1.0, 0.5;
  obs.times = test::vec2(0.0, 0.8);
  obs.tau_steps = 80;
  obs.dt = 0.01;
  const KernelSpec k = KernelSpec::isotropic(2, 1.0, 2.0);
  const auto f = initial_fit(obs, k, test::vec2(0.25, 0.25));
  const Points q = test::normal_points(10, 2, 22);
  const Matrix kx = kernels::cross_kernel(q, obs.states.topRows(1), k);
  const Points fx = f.evaluate(q);
  // Each row is k(x, O_1) times one fixed vector.
  const Vector dir = fx.row(0).transpose() / kx(0, 0);
  for (int i = 0; i < 10; ++i)
    CHECK((fx.row(i).transpose() - kx(i, 0) * dir).norm() < 1e-10 * (1 + dir.norm()));
  CHECK(dir.normalized().isApprox((obs.states.row(1) - obs.states.row(0)).transpose().normalized(),
                                  1e-10));
}

TEST_CASE("e-step weights add up to the latent time") {
  const auto obs = ou_observations(6, 1.0, 0.7, 0.5, 50, 23);
  for (auto aug : {Augmentation::brownian, Augmentation::ou, Augmentation::geometric}) {
    CAPTURE(to_string(aug));
    EMConfig cfg = small_config(1, 0.7);
    cfg.augmentation = aug;
    const auto drift = linear_drift_field();
    const auto res = e_step(drift, obs, nullptr, cfg, 1);
    CHECK(res.failures.empty());
    CHECK(res.data.total_weight() == doctest::Approx(5 * 0.5).epsilon(1e-12));
    CHECK(std::abs(res.data.total_weight() - 2.5) < 1e-9);
    CHECK(res.data.size() == 5 * 50 * cfg.bridge_samples);
    CHECK(std::isfinite(res.free_energy));
    CHECK(res.free_energy >= 0.0);
    for (double m : res.miss_rates) CHECK(m <= cfg.max_miss_rate);
  }
}

TEST_CASE("e-step without potential matches the linear smoother") {
  sde::ObservationSet obs;
  obs.states.resize(2, 1);
  obs.states << 1.0, 2.0;
  obs.times = test::vec2(0.0, 1.0);
  obs.tau_steps = 100;
  obs.dt = 0.01;
  EMConfig cfg = small_config(1, 0.7);
  cfg.particles = 300;
  cfg.score_inducing = 40;
  cfg.bridge_samples = 1000;
  const auto res = e_step(linear_drift_field(), obs, nullptr, cfg, 1, true);
  REQUIRE(res.segments.size() == 1);
  const Points& mid = res.segments[0].states[50];
  const double theta = 1.0, s = 0.7, t = 0.5, T = 1.0;
  const double mean = (1.0 * std::sinh(theta * (T - t)) + 2.0 * std::sinh(theta * t)) /
                      std::sinh(theta * T);
  const double var =
      s * s * std::sinh(theta * t) * std::sinh(theta * (T - t)) / (theta * std::sinh(theta * T));
  CHECK(test::column_mean(mid)(0) == doctest::Approx(mean).epsilon(0.1));
  CHECK(test::column_var(mid)(0) == doctest::Approx(var).epsilon(0.1));
}

TEST_CASE("e-step failures") {
  const auto obs = ou_observations(4, 1.0, 0.7, 0.5, 50, 24);
  EMConfig cfg = small_config(1, 0.7);
  SUBCASE("every interval failing is an error") {
    cfg.endpoint_tolerance = 1e-12;
    cfg.max_miss_rate = 0.0;
    CHECK_THROWS_AS(e_step(linear_drift_field(), obs, nullptr, cfg, 1), Error);
  }
  SUBCASE("a geometric potential needs the schedule") {
    cfg.beta = 0.5;
    CHECK_THROWS_AS(e_step(linear_drift_field(), obs, nullptr, cfg, 1), InvalidParameter);
  }
}

TEST_CASE("e-step is deterministic") {
  const auto obs = ou_observations(5, 1.0, 0.7, 0.5, 50, 25);
  const EMConfig cfg = small_config(1, 0.7);
  const auto a = e_step(linear_drift_field(), obs, nullptr, cfg, 1);
  const auto b = e_step(linear_drift_field(), obs, nullptr, cfg, 1);
  CHECK(a.data.points == b.data.points);
  CHECK(a.data.responses == b.data.responses);
  const auto c = e_step(linear_drift_field(), obs, nullptr, cfg, 2);
  CHECK(a.data.points != c.data.points);
}

TEST_CASE("m-step") {
  EMConfig cfg = small_config(1, 0.5);
  SUBCASE("zero responses give the zero field") {
    auto d = linear_data(500, 26);
    d.responses.setZero();
    const auto f = m_step(d, cfg, 1);
    CHECK(f.evaluate(Points(Vector::LinSpaced(9, -2, 2))).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("linear responses give the linear drift") {
    const auto f = m_step(linear_data(2000, 27), cfg, 1);
    const Points g = Vector::LinSpaced(21, -1.5, 1.5);
    CHECK((f.evaluate(g) + g).cwiseAbs().maxCoeff() < 0.1);
  }
  SUBCASE("permuting intervals leaves the fit unchanged") {
    std::vector<gp::WeightedStateData> parts;
    for (std::uint64_t k = 0; k < 4; ++k) parts.push_back(linear_data(300, 30 + k));
    const auto f = m_step(gp::WeightedStateData::concatenate(parts), cfg, 1);
    std::swap(parts[0], parts[3]);
    std::swap(parts[1], parts[2]);
    const auto g = m_step(gp::WeightedStateData::concatenate(parts), cfg, 1);
    const Points q = Vector::LinSpaced(15, -2, 2);
    CHECK((f.evaluate(q) - g.evaluate(q)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("empty data") {
    CHECK_THROWS_AS(m_step(gp::WeightedStateData{}, cfg, 1), InvalidParameter);
  }
}

TEST_CASE("thinning keeps the total weight") {
  auto d = linear_data(1003, 28);
  d.weights = Vector::LinSpaced(1003, 0.5, 1.5);
  const auto same = thin(d, 2000);
  CHECK(same.points == d.points);
  for (long cap : {1L, 7L, 100L, 1002L}) {
    CAPTURE(cap);
    const auto t = thin(d, cap);
    CHECK(t.size() <= cap);
    CHECK(t.size() >= 1);
    CHECK(t.total_weight() == doctest::Approx(d.total_weight()).epsilon(1e-12));
  }
}

TEST_CASE("EM loop") {
  const auto obs = ou_observations(8, 1.0, 0.7, 0.5, 50, 29);
  EMConfig cfg = small_config(1, 0.7);
  SUBCASE("no iterations returns the initial fit") {
    cfg.max_iterations = 0;
    const auto h = run_em(obs, cfg);
    REQUIRE(h.states.size() == 1);
    CHECK(h.states[0].iteration == 0);
    CHECK(!h.schedule);
    const auto f0 = initial_fit(obs, cfg.kernel, cfg.sigma);
    CHECK(h.states[0].drift.coefficients == f0.coefficients);
  }
  SUBCASE("history, scores and replay") {
    cfg.max_iterations = 2;
    int calls = 0;
    const auto score = [&calls](const gp::DriftField&) { return static_cast<double>(++calls); };
    const auto h = run_em(obs, cfg, score);
    CHECK(!h.error);
    REQUIRE(h.states.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(h.states[i].iteration == i);
      CHECK(*h.states[i].wrmse == i + 1);
      CHECK(std::isfinite(h.states[i].free_energy));
      CHECK(h.states[i].free_energy >= 0.0);
    }
    const auto h2 = run_em(obs, cfg);
    for (int i = 0; i < 3; ++i) {
      CHECK(h.states[i].drift.centers == h2.states[i].drift.centers);
      CHECK(h.states[i].drift.coefficients == h2.states[i].drift.coefficients);
    }
  }
  SUBCASE("failures end the run with a partial history") {
    cfg.max_iterations = 2;
    cfg.endpoint_tolerance = 1e-12;
    cfg.max_miss_rate = 0.0;
    const auto h = run_em(obs, cfg);
    CHECK(h.error);
    CHECK(h.states.size() == 1);
  }
}

}  // TEST_SUITE
