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

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "geopath/sde.hpp"
#include "geopath/types.hpp"

namespace geopath::geometry {

/// Riemannian metric learned from a point cloud: the inverse of the
/// Gaussian-weighted local diagonal covariance,
///   H_dd(x) = (sum_i w_i(x) (x_i,d - x_d)^2 + eps)^{-1},
///   w_i(x) = exp(-|x_i - x|^2 / (2 sigma_m^2)).
/// Large where data is sparse, small along densely sampled directions.
class MetricField {
 public:
  MetricField(Points support, double sigma_m, double epsilon);

  /// H = scale * I everywhere (flat geometry, used for testing).
  static MetricField identity(int dim, double scale = 1.0);

  int dim() const { return dim_; }
  const Points& support() const { return support_; }
  double sigma_m() const { return sigma_m_; }
  double epsilon() const { return epsilon_; }
  bool is_flat() const { return flat_; }

  /// Copy with every tensor multiplied by c > 0.
  MetricField scaled(double c) const;

  /// Diagonal of H(x).
  Vector diagonal(const Vector& x) const;
  /// Diagonal of H(x) and its Jacobian J(d, e) = dH_dd / dx_e.
  void diagonal_and_jacobian(const Vector& x, Vector& h, Matrix& jac) const;

 private:
  MetricField() = default;
  Points support_;
  double sigma_m_ = 1.0;
  double epsilon_ = 1.0;
  double scale_ = 1.0;
  int dim_ = 0;
  bool flat_ = false;
};

/// Median nearest-neighbour distance of a point cloud.
double median_nn_distance(const Points& pts);

struct GeodesicCurve {
  Points nodes;  // n_nodes x d on the uniform grid t' in [0, 1]
  double energy = 0.0;
  bool converged = true;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool graph_initialized = false;

  Eigen::Index n_nodes() const { return nodes.rows(); }
};

/// Discrete kinetic energy (1/2) sum_s dt' v_s^T H(m_s) v_s with segment
/// velocities v_s = (x_{s+1} - x_s) / dt' and midpoints m_s.
double curve_energy(const Points& nodes, const MetricField& metric);
double curve_energy(const GeodesicCurve& curve, const MetricField& metric);

/// Discrete Riemannian length sum_s sqrt(dx^T H(m_s) dx).
double curve_length(const Points& nodes, const MetricField& metric);

struct GeodesicOptions {
  int max_iterations = 2000;
  /// Converged when |grad E| < relative_tolerance * E / n_nodes.
  double relative_tolerance = 1e-5;
  int graph_neighbours = 10;
  /// Graph-path initialization is used when the chord energy exceeds this
  /// multiple of the graph path energy.
  double graph_switch_ratio = 5.0;
};

/// Energy-minimizing curve between a and b with fixed endpoints. Without an
/// explicit initialization the solver starts from the straight chord, or from
/// the shortest path through the metric's support on a k-NN graph when that
/// path is much cheaper. Non-convergence is reported through `converged`.
GeodesicCurve solve_geodesic(const MetricField& metric, const Vector& a,
                             const Vector& b, int n_nodes,
                             const std::optional<Points>& init = std::nullopt,
                             const GeodesicOptions& opt = {});

/// (atan2(x_2, x_1) + pi) / (2 pi), folded into [0, 1). Throws
/// UndefinedPhase at the origin.
double phase_of(const Vector& x);

enum class Direction { ccw, cw };

/// Sign of the mean wrapped phase increment between consecutive observations.
std::optional<Direction> estimate_direction(const Points& obs);

struct PhaseFilterResult {
  Points support;
  bool fallback = false;  // no observation strictly inside the arc
};

/// Observations whose phase lies on the directed arc from phi_k to phi_k1.
/// Falls back to the full set (flagged) when the arc holds nothing besides
/// its endpoints.
PhaseFilterResult filter_support_by_phase(const Points& obs, double phi_k,
                                          double phi_k1, Direction direction);

struct MetricParams {
  std::optional<double> sigma_m;  // default: median NN distance
  double epsilon = 1e-4;
  int n_nodes = 32;
  GeodesicOptions solver;
};

struct IntervalGeodesic {
  GeodesicCurve curve;
  bool phase_fallback = false;
  bool warm_started = false;
};

/// Per-interval geodesics mapped to global time t = t0 + k tau + t' tau.
class GeodesicSchedule {
 public:
  GeodesicSchedule(std::vector<IntervalGeodesic> intervals, double t0,
                   double tau, double sigma_m, double epsilon);

  std::size_t size() const { return intervals_.size(); }
  double tau() const { return tau_; }
  double start_time() const { return t0_; }
  double sigma_m() const { return sigma_m_; }
  double epsilon() const { return epsilon_; }
  const IntervalGeodesic& interval(std::size_t k) const { return intervals_[k]; }

  /// Guide point inside interval k at local time s in [0, tau]. The curve is
  /// traversed at constant Euclidean speed.
  Vector at_local(std::size_t k, double s) const;
  /// Guide point at global time t.
  Vector at(double t) const;
  /// Callable local-time guide for interval k.
  std::function<Vector(double)> guide(std::size_t k) const;

 private:
  std::vector<IntervalGeodesic> intervals_;
  std::vector<Vector> arclength_;  // normalized cumulative arc length per curve
  double t0_, tau_, sigma_m_, epsilon_;
};

GeodesicSchedule build_geodesic_schedule(
    const sde::ObservationSet& obs, const MetricParams& params,
    std::optional<Direction> direction = std::nullopt);

}  // namespace geopath::geometry
