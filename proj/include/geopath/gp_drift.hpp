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

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "geopath/kernels.hpp"
#include "geopath/sde.hpp"
#include "geopath/types.hpp"

namespace geopath::gp {

namespace detail {
struct DenseCache;
}

/// Nonparametric drift estimate f(x) = k(x, centers) * coefficients.
///
/// Dense fits keep the factorized regression system so the posterior
/// variance can be queried; sparse (inducing-point) fits only carry the mean.
struct DriftField {
  enum class Kind { dense, sparse };

  Points centers;      // M x d
  Matrix coefficients; // M x d
  KernelSpec kernel;
  double jitter = 0.0;
  Kind kind = Kind::dense;
  Vector sigma;        // noise amplitude used for the fit
  double dt = 0.0;     // time step of the regression data (dense fits)

  std::shared_ptr<const detail::DenseCache> cache;

  int dim() const { return static_cast<int>(kernel.dim()); }
  Points evaluate(const Points& X) const;
  Vector evaluate(const Vector& x) const;
  /// Copyable batched callable that shares this field's data.
  VectorField as_function() const;

  /// The zero field over `dim` dimensions with the given kernel.
  static DriftField zero(const KernelSpec& kernel, const Vector& sigma);
};

/// Regression pairs (X_t, Y_t) with Y_t = (X_{t+dt} - X_t) / dt.
struct IncrementPairs {
  Points states;
  Matrix responses;
  double dt = 0.0;
};

/// Particle approximation of the occupation density A(x) and of
/// B(x) = A(x) * g(x): states x_j with weights a_j and responses g_j.
struct WeightedStateData {
  Points points;
  Vector weights;
  Matrix responses;

  Eigen::Index size() const { return points.rows(); }
  double total_weight() const { return weights.sum(); }
  void validate() const;
  static WeightedStateData concatenate(const std::vector<WeightedStateData>& parts);
};

IncrementPairs response_increments(const sde::Trajectory& traj);

/// Dense GP posterior mean for drift regression,
///   f(x) = k(x, X)^T (K + (sigma^2 / dt) I)^{-1} Y,
/// on every `stride`-th pair of the supplied regression set.
DriftField girsanov_gp_fit(const Points& X, const Matrix& Y, double dt,
                           const KernelSpec& kernel, const Vector& sigma,
                           int stride = 1);

DriftField girsanov_gp_fit(const sde::Trajectory& traj, const KernelSpec& kernel,
                           const Vector& sigma, int stride = 4);

/// Per-dimension posterior variance of a dense fit, clipped at zero.
Vector gp_predict_variance(const DriftField& field, const Vector& x);

/// k-means++ seeding (no Lloyd iterations). Returns all points when
/// S >= number of points.
Points select_inducing_points(const Points& points, int S, std::uint64_t seed);

/// Sparse (inducing point) drift fit from weighted particle data,
///   f(x) = k(x, Z) (sigma^2 K_S + C)^{-1} b,
///   C = sum_j a_j k(Z, x_j) k(x_j, Z),  b = sum_j a_j k(Z, x_j) g_j^T,
/// i.e. k(x, Z)(I + Lambda K_S)^{-1} d with Lambda = K_S^{-1} C K_S^{-1} / sigma^2
/// and d = K_S^{-1} b / sigma^2.
DriftField sparse_mstep_fit(const WeightedStateData& data, const Points& inducing,
                            const KernelSpec& kernel, const Vector& sigma);

/// Sorts rows lexicographically by (point, response, weight) so reductions
/// over the data do not depend on the order it was produced in.
WeightedStateData canonical_order(const WeightedStateData& data);

}  // namespace geopath::gp
