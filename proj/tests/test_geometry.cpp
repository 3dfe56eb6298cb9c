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

#include <algorithm>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "geopath/errors.hpp"
#include "geopath/geometry.hpp"
#include "support.hpp"

using namespace geopath;
using namespace geopath::geometry;

namespace {

Vector at_phase(double p, double r = 1.0) {
  const double a = 2.0 * std::numbers::pi * p - std::numbers::pi;
  return test::vec2(r * std::cos(a), r * std::sin(a));
}

Points chord(const Vector& a, const Vector& b, int n) {
  Points P(n, a.size());
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    P.row(i) = ((1.0 - t) * a + t * b).transpose();
  }
  return P;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

std::vector<double> radii(const Points& P) {
  std::vector<double> r(P.rows());
  for (Eigen::Index i = 0; i < P.rows(); ++i) r[i] = P.row(i).norm();
  return r;
}

double discrete_length_sq(const Points& nodes, const MetricField& m) {
  const double l = curve_length(nodes, m);
  return l * l;
}

// Sorted phases of a support set.
std::vector<double> phases(const Points& P) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < P.rows(); ++i) out.push_back(phase_of(P.row(i).transpose()));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("metric tensor values") {
  SUBCASE("single support point at the query") {
    Points s(1, 2);
    s << 0.3, -0.2;
    const MetricField m(s, 1.0, 1e-4);
    const Vector h = m.diagonal(s.row(0).transpose());
    CHECK(h(0) == doctest::Approx(1e4));
    CHECK(h(1) == doctest::Approx(1e4));
  }
  SUBCASE("two symmetric points") {
    Points s(2, 2);
    s << 1, 0, -1, 0;
    const MetricField m(s, 1.0, 1e-4);
    const Vector h = m.diagonal(test::vec2(0, 0));
    // Independent evaluation: w = exp(-1/2), covariance 2w.
    CHECK(h(0) == doctest::Approx(1.0 / (2.0 * std::exp(-0.5) + 1e-4)));
    CHECK(h(0) == doctest::Approx(0.8243).epsilon(1e-3));
    CHECK(h(1) == doctest::Approx(1e4));
  }
  SUBCASE("far from the support the metric saturates") {
    const MetricField m(test::noisy_circle(50, 0.05, 1), 0.2, 1e-4);
    const Vector h = m.diagonal(test::vec2(40, 40));
    CHECK(h(0) == doctest::Approx(1e4));
    CHECK(h(1) == doctest::Approx(1e4));
  }
  SUBCASE("positive and bounded by 1/epsilon") {
    const MetricField m(test::noisy_circle(200, 0.1, 2), 0.3, 1e-3);
    const Points Q = test::normal_points(100, 2, 3) * 2.0;
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      const Vector h = m.diagonal(Q.row(i).transpose());
      CHECK(h.minCoeff() > 0.0);
      CHECK(h.maxCoeff() <= 1e3 * (1 + 1e-12));
    }
  }
}

TEST_CASE("metric jacobian matches finite differences") {
  const MetricField m(test::noisy_circle(80, 0.1, 4), 0.4, 1e-2);
  const Vector x = test::vec2(0.7, 0.5);
  Vector h;
  Matrix J;
  m.diagonal_and_jacobian(x, h, J);
  CHECK((h - m.diagonal(x)).cwiseAbs().maxCoeff() < 1e-12);
  const double eps = 1e-6;
  for (int e = 0; e < 2; ++e) {
    Vector xp = x, xm = x;
    xp(e) += eps;
    xm(e) -= eps;
    const Vector fd = (m.diagonal(xp) - m.diagonal(xm)) / (2 * eps);
    for (int d = 0; d < 2; ++d)
      CHECK(J(d, e) == doctest::Approx(fd(d)).epsilon(1e-5));
  }
}

TEST_CASE("curve energy") {
  const auto I = MetricField::identity(2);
  CHECK(curve_energy(chord(test::vec2(0, 0), test::vec2(1, 0), 17), I) == doctest::Approx(0.5));

  const MetricField m(test::noisy_circle(100, 0.1, 5), 0.3, 1e-3);
  Points arc(33, 2);
  for (int i = 0; i < 33; ++i) arc.row(i) = at_phase(0.5 + 0.25 * i / 32.0).transpose();
  const double e = curve_energy(arc, m);
  CHECK(curve_energy(arc, m.scaled(3.0)) == doctest::Approx(3.0 * e));

  SUBCASE("refinement of a smooth curve") {
    auto sampled = [](int n) {
      Points p(n, 2);
      for (int i = 0; i < n; ++i) p.row(i) = at_phase(0.5 + 0.25 * i / (n - 1.0)).transpose();
      return p;
    };
    const double e16 = curve_energy(sampled(16), m), e64 = curve_energy(sampled(64), m);
    CHECK(std::abs(e16 - e64) < 0.01 * e64);
  }
  SUBCASE("energy bounds the squared length") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Points p = test::normal_points(20, 2, 100 + seed);
      CHECK(curve_energy(p, m) >= 0.5 * discrete_length_sq(p, m) * (1 - 1e-12));
    }
  }
}

TEST_CASE("geodesics in flat geometry") {
  const auto I = MetricField::identity(2);
  const Vector a = test::vec2(-1, 0.5), b = test::vec2(2, 1);
  Points wiggle = chord(a, b, 24);
  wiggle.middleRows(1, 22) += 0.2 * test::normal_points(22, 2, 6);
  const auto g = solve_geodesic(I, a, b, 24, wiggle);
  CHECK(g.converged);
  CHECK((g.nodes - chord(a, b, 24)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(g.energy <= curve_energy(wiggle, I));

  const auto c = solve_geodesic(I, a, a, 10);
  CHECK(c.energy == 0.0);
  CHECK((c.nodes.rowwise() - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("geodesic on an annulus stays in the band") {
  const Points cloud = test::noisy_circle(400, 0.05, 7);
  const MetricField m(cloud, median_nn_distance(cloud) * 2.0, 1e-4);
  const Vector a = at_phase(0.5), b = at_phase(0.75);
  const auto g = solve_geodesic(m, a, b, 32);
  const auto r = radii(cloud);
  const double lo = quantile(r, 0.05), hi = quantile(r, 0.95);
  for (double ri : radii(g.nodes)) {
    CHECK(ri >= lo);
    CHECK(ri <= hi);
  }
  CHECK(g.energy < curve_energy(chord(a, b, 32), m));
  CHECK(g.nodes.row(0).transpose() == a);
  CHECK(g.nodes.row(31).transpose() == b);

  SUBCASE("interior gradient at convergence") {
    REQUIRE(g.converged);
    CHECK(g.gradient_norm < 1e-5 * g.energy / 32.0);
  }
  SUBCASE("reversal symmetry") {
    const auto back = solve_geodesic(m, b, a, 32, Points(g.nodes.colwise().reverse()));
    const auto fwd = solve_geodesic(m, a, b, 32, g.nodes);
    CHECK((Points(back.nodes.colwise().reverse()) - fwd.nodes).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("phase values") {
  CHECK(phase_of(test::vec2(1, 0)) == doctest::Approx(0.5));
  CHECK(phase_of(test::vec2(0, 1)) == doctest::Approx(0.75));
  CHECK(phase_of(test::vec2(-1, 0)) == 0.0);
  CHECK(phase_of(test::vec2(-1, -1e-300)) < 1e-10);
  CHECK_THROWS_AS(phase_of(test::vec2(0, 0)), UndefinedPhase);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Vector x = test::normal_points(1, 2, s).row(0).transpose();
    const double p = phase_of(x);
    CHECK(p >= 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("direction estimate") {
  Points ccw(20, 2), cw(20, 2);
  for (int i = 0; i < 20; ++i) {
    ccw.row(i) = at_phase(0.07 * i).transpose();
    cw.row(i) = at_phase(1.0 - 0.07 * i).transpose();
  }
  CHECK(estimate_direction(ccw) == Direction::ccw);
  CHECK(estimate_direction(cw) == Direction::cw);
}

TEST_CASE("phase filtering") {
  Points obs(20, 2);
  for (int i = 0; i < 20; ++i) obs.row(i) = at_phase(0.025 + 0.05 * i).transpose();

  SUBCASE("plain arc") {
    const auto r = filter_support_by_phase(obs, 0.2, 0.4, Direction::ccw);
    CHECK_FALSE(r.fallback);
    for (double p : phases(r.support)) {
      CHECK(p >= 0.2);
      CHECK(p <= 0.4);
    }
    CHECK(r.support.rows() == 4);
  }
  SUBCASE("arc across the cut") {
    const auto r = filter_support_by_phase(obs, 0.9, 0.1, Direction::ccw);
    CHECK_FALSE(r.fallback);
    for (double p : phases(r.support)) CHECK((p >= 0.9 || p <= 0.1));
    CHECK(r.support.rows() == 4);
  }
  SUBCASE("clockwise takes the complement") {
    const auto r = filter_support_by_phase(obs, 0.4, 0.2, Direction::cw);
    for (double p : phases(r.support)) {
      CHECK(p >= 0.2);
      CHECK(p <= 0.4);
    }
  }
  SUBCASE("endpoints are always kept") {
    const double pa = phase_of(obs.row(3).transpose()), pb = phase_of(obs.row(6).transpose());
    const auto r = filter_support_by_phase(obs, pa, pb, Direction::ccw);
    CHECK(r.support.rows() == 4);
  }
  SUBCASE("degenerate arc falls back") {
    const double p = phase_of(obs.row(5).transpose());
    const auto r = filter_support_by_phase(obs, p, p, Direction::ccw);
    CHECK(r.fallback);
    CHECK(r.support == obs);
  }
}

TEST_CASE("geodesic schedule") {
  SUBCASE("two observations give one curve") {
    sde::ObservationSet obs;
    obs.states.resize(2, 2);
    obs.states << 1, 0, 0, 1;
    obs.times = (Vector(2) << 0.0, 0.8).finished();
    obs.tau_steps = 80;
    obs.dt = 0.01;
    MetricParams p;
    p.sigma_m = 0.5;
    const auto s = build_geodesic_schedule(obs, p);
    CHECK(s.size() == 1);
  }

  SUBCASE("half-turn sampling stays on the cycle and hits the observations") {
    // Observations almost half a turn apart, so each chord crosses the hole.
    sde::ObservationSet obs;
    const int K = 80;
    Rng rng(8);
    obs.states.resize(K, 2);
    obs.times.resize(K);
    double phase = 0.01;
    for (int i = 0; i < K; ++i) {
      obs.states.row(i) = at_phase(phase, 1.0 + 0.03 * rng.normal()).transpose();
      obs.times(i) = 3.8 * i;
      phase = std::fmod(phase + 0.43 + 0.04 * rng.uniform(), 1.0);
    }
    obs.tau_steps = 380;
    obs.dt = 0.01;
    const auto s = build_geodesic_schedule(obs, MetricParams{}, Direction::ccw);
    REQUIRE(s.size() == static_cast<std::size_t>(K - 1));
    const auto r = radii(obs.states);
    const double lo = quantile(r, 0.05), hi = quantile(r, 0.95);
    // Endpoints are noisy observations themselves, so the band is widened by
    // three noise standard deviations.
    const double slack = 3 * 0.03;
    for (std::size_t k = 0; k < s.size(); ++k) {
      CAPTURE(k);
      CHECK_FALSE(s.interval(k).phase_fallback);
      for (double ri : radii(s.interval(k).curve.nodes)) {
        CHECK(ri >= lo - slack);
        CHECK(ri <= hi + slack);
      }
    }
    for (int i = 0; i < K; ++i)
      CHECK((s.at(obs.times(i)) - obs.states.row(i).transpose()).norm() < 1e-12);
    CHECK_THROWS_AS(s.at(-1.0), DomainError);
  }
}

}  // TEST_SUITE
