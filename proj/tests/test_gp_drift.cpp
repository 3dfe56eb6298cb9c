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
#include <numeric>

#include "doctest.h"
#include "geopath/errors.hpp"
#include "geopath/gp_drift.hpp"
#include "support.hpp"

using namespace geopath;
using namespace geopath::gp;

namespace {

double fill_distance(const Points& cloud, const Points& centers) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < cloud.rows(); ++i)
    worst = std::max(worst, (centers.rowwise() - cloud.row(i)).rowwise().norm().minCoeff());
  return worst;
}

WeightedStateData path_data(const sde::Trajectory& tr) {
  const auto inc = response_increments(tr);
  WeightedStateData d;
  d.points = inc.states;
  d.responses = inc.responses;
  d.weights = Vector::Constant(inc.states.rows(), tr.dt);
  return d;
}

}  // namespace

TEST_SUITE("gp_drift") {

TEST_CASE("response increments") {
  sde::Trajectory tr;
  tr.dt = 0.01;
  tr.states = Points::Constant(5, 2, 3.0);
  CHECK(response_increments(tr).responses.cwiseAbs().maxCoeff() == 0.0);

  tr.states.resize(2, 1);
  tr.states << 0.0, 0.01;
  CHECK(response_increments(tr).responses(0, 0) == doctest::Approx(1.0));
  tr.states.resize(1, 1);
  CHECK_THROWS_AS(response_increments(tr), InvalidParameter);
}

TEST_CASE("increments of a noiseless decay approach the drift") {
  const sde::SdeSystem sys(1, test::linear_decay(1.0), Vector::Zero(1));
  const auto tr = sde::euler_maruyama_simulate(sys, Vector::Ones(1), 1e-4, 2000, 0);
  const auto inc = response_increments(tr);
  CHECK((inc.responses + inc.states).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero targets give a zero field") {
  const Points X = test::normal_points(100, 2, 1);
  const auto f = girsanov_gp_fit(X, Matrix::Zero(100, 2), 0.01,
                                 KernelSpec::isotropic(2, 1.0, 1.0), Vector::Ones(2));
  CHECK(f.evaluate(test::normal_points(20, 2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dense fit recovers an Ornstein-Uhlenbeck drift") {
  const sde::SdeSystem sys(1, test::linear_decay(1.0), Vector::Constant(1, 0.5));
  const auto tr = sde::euler_maruyama_simulate(sys, Vector::Zero(1), 0.01, 50000, 3);
  const auto f = girsanov_gp_fit(tr, KernelSpec::isotropic(1, 1.0, 2.0),
                                 Vector::Constant(1, 0.5), 25);
  CHECK(f.evaluate(Vector(Vector::Ones(1)))(0) == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("regression solve residual") {
  const Points X = test::normal_points(200, 2, 4);
  const Matrix Y = test::normal_points(200, 2, 5);
  const auto k = KernelSpec::isotropic(2, 0.8, 1.0);
  const double dt = 0.1;
  const auto f = girsanov_gp_fit(X, Y, dt, k, Vector::Ones(2));
  const Matrix A = kernels::cross_kernel(X, X, k) +
                   (1.0 / dt + f.jitter) * Matrix::Identity(200, 200);
  const double rel = (A * f.coefficients - Y).norm() / Y.norm();
  CHECK(rel < 1e-8);
}

TEST_CASE("mean interpolates as the noise vanishes") {
  Points X(10, 2);
  for (int i = 0; i < 10; ++i) X.row(i) << std::cos(0.6 * i) * (1 + 0.1 * i), std::sin(0.6 * i);
  const Matrix Y = test::normal_points(10, 2, 6);
  const auto f = girsanov_gp_fit(X, Y, 1.0, KernelSpec::isotropic(2, 0.4, 1.0),
                                 Vector::Constant(2, 1e-7));
  CHECK((f.evaluate(X) - Y).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("posterior variance") {
  const auto k = KernelSpec::isotropic(2, 0.7, 2.5);
  SUBCASE("no data gives the prior variance") {
    const auto z = DriftField::zero(k, Vector::Ones(2));
    CHECK(gp_predict_variance(z, test::vec2(0.3, 0.1))(0) == doctest::Approx(2.5));
  }
  SUBCASE("vanishes at a regression point in the noiseless limit") {
    const Points X = test::noisy_circle(30, 0.0, 7);
    const auto f = girsanov_gp_fit(X, Matrix::Zero(30, 2), 1.0, k, Vector::Constant(2, 1e-5));
    CHECK(gp_predict_variance(f, X.row(3).transpose()).maxCoeff() < 1e-6);
  }
  SUBCASE("nonincreasing as data is added, nonnegative everywhere") {
    const Points X = test::normal_points(60, 2, 8);
    const Points Q = test::normal_points(25, 2, 9) * 1.5;
    Matrix prev = Matrix::Constant(Q.rows(), 2, 2.5);
    for (int n : {5, 15, 30, 60}) {
      const auto f = girsanov_gp_fit(X.topRows(n), Matrix::Zero(n, 2), 0.05, k,
                                     Vector::Constant(2, 0.3));
      for (Eigen::Index q = 0; q < Q.rows(); ++q) {
        const Vector v = gp_predict_variance(f, Q.row(q).transpose());
        CHECK(v.minCoeff() >= 0.0);
        CHECK(v(0) <= prev(q, 0) + 1e-10);
        prev.row(q) = v.transpose();
      }
    }
  }
}

TEST_CASE("inducing point selection") {
  const Points P = test::normal_points(500, 2, 10);
  SUBCASE("S at least the size returns everything") {
    CHECK(select_inducing_points(P, 500, 1) == P);
    CHECK(select_inducing_points(P, 900, 1) == P);
  }
  SUBCASE("S = 1 stays inside the bounding box") {
    const Points z = select_inducing_points(P, 1, 3);
    REQUIRE(z.rows() == 1);
    CHECK((z.row(0).array() >= P.colwise().minCoeff().array()).all());
    CHECK((z.row(0).array() <= P.colwise().maxCoeff().array()).all());
  }
  SUBCASE("deterministic given the seed") {
    CHECK(select_inducing_points(P, 40, 5) == select_inducing_points(P, 40, 5));
  }
  SUBCASE("covers a Van der Pol cloud at least as well as a random subset") {
    const sde::SdeSystem sys(2, sde::van_der_pol_drift(2.0), Vector::Constant(2, 0.25));
    const auto tr = sde::euler_maruyama_simulate(sys, test::vec2(1.81, -1.41), 0.01, 30000, 2);
    const Points cloud = sde::subsample_observations(tr, 10).states;
    const Points Z = select_inducing_points(cloud, 300, 11);
    std::vector<Eigen::Index> idx(cloud.rows());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(12);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    Points U(300, 2);
    for (int i = 0; i < 300; ++i) U.row(i) = cloud.row(idx[i]);
    CHECK(fill_distance(cloud, Z) < 2.0 * fill_distance(cloud, U));
  }
  CHECK_THROWS_AS(select_inducing_points(P, 0, 1), InvalidParameter);
}

TEST_CASE("sparse fit") {
  const auto k = KernelSpec::isotropic(2, 1.0, 2.0);
  const Vector sigma = Vector::Constant(2, 0.5);

  SUBCASE("zero responses give a zero field") {
    WeightedStateData d;
    d.points = test::normal_points(400, 2, 13);
    d.responses = Matrix::Zero(400, 2);
    d.weights = Vector::Constant(400, 0.01);
    const auto f = sparse_mstep_fit(d, select_inducing_points(d.points, 50, 1), k, sigma);
    CHECK(f.evaluate(test::normal_points(10, 2, 14)).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("recovers a linear field from dense occupation") {
    WeightedStateData d;
    d.points = test::normal_points(20000, 2, 15);
    d.responses = -d.points;
    d.weights = Vector::Constant(20000, 0.01);
    const auto f = sparse_mstep_fit(d, select_inducing_points(d.points, 100, 2), k, sigma);
    const Points Q = test::normal_points(200, 2, 16).cwiseMax(-1.5).cwiseMin(1.5);
    CHECK((f.evaluate(Q) + Q).cwiseAbs().maxCoeff() < 0.1);
  }

  SUBCASE("agrees with the dense fit on a single path") {
    const sde::SdeSystem sys(2, sde::van_der_pol_drift(2.0), sigma);
    const auto tr = sde::euler_maruyama_simulate(sys, test::vec2(1.81, -1.41), 0.01, 1500, 3);
    const auto data = path_data(tr);
    const auto dense = girsanov_gp_fit(data.points, data.responses, tr.dt, k, sigma, 1);
    const auto sparse =
        sparse_mstep_fit(data, select_inducing_points(data.points, 300, 4), k, sigma);
    const Points grid = data.points(Eigen::seq(0, Eigen::last, 7), Eigen::all);
    const Points fd = dense.evaluate(grid);
    const double rms = std::sqrt(fd.squaredNorm() / static_cast<double>(fd.rows()));
    CHECK((sparse.evaluate(grid) - fd).rowwise().norm().maxCoeff() < 0.05 * rms);
  }

  SUBCASE("invariant under permutation of the particles") {
    WeightedStateData d;
    d.points = test::normal_points(3000, 2, 17);
    d.responses = test::normal_points(3000, 2, 18);
    d.weights = test::normal_points(3000, 1, 19).col(0).cwiseAbs();
    const Points Z = select_inducing_points(d.points, 60, 3);
    std::vector<Eigen::Index> idx(3000);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(20);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    WeightedStateData p;
    p.points = d.points(idx, Eigen::all);
    p.responses = d.responses(idx, Eigen::all);
    p.weights = d.weights(idx);
    const Points Q = test::normal_points(50, 2, 21);
    const Points a = sparse_mstep_fit(canonical_order(d), Z, k, sigma).evaluate(Q);
    const Points b = sparse_mstep_fit(canonical_order(p), Z, k, sigma).evaluate(Q);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
    // Without canonical ordering only rounding differs.
    const Points c = sparse_mstep_fit(p, Z, k, sigma).evaluate(Q);
    CHECK((a - c).cwiseAbs().maxCoeff() < 1e-10);
  }

  WeightedStateData empty;
  empty.points.resize(0, 2);
  empty.responses.resize(0, 2);
  CHECK_THROWS_AS(sparse_mstep_fit(empty, Points::Zero(1, 2), k, sigma), InvalidParameter);
}

}  // TEST_SUITE
