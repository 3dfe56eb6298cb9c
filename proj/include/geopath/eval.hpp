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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "geopath/bridge.hpp"
#include "geopath/em.hpp"
#include "geopath/sde.hpp"
#include "geopath/types.hpp"

namespace geopath::eval {

/// Rectangular grid with normalized KDE weights of the observations.
struct EvaluationGrid {
  Points points;   // (nx * ny) x d, x fastest
  Vector weights;  // sum 1
  double bandwidth = 0.0;
  int nx = 0, ny = 0;
};

/// Silverman's rule of thumb averaged over dimensions.
double silverman_bandwidth(const Points& obs);

/// Gaussian KDE of `obs` at `grid`, normalized to sum 1. Throws
/// InvalidParameter for bandwidth <= 0.
Vector kde_weights(const Points& obs, const Points& grid, double bandwidth);

/// n x n grid over the bounding box of `obs` padded by `pad` of its extent on
/// each side. Bandwidth defaults to the Silverman rule.
EvaluationGrid make_grid(const Points& obs, int n = 30, double pad = 0.1,
                         std::optional<double> bandwidth = std::nullopt);

/// sqrt(sum_g w_g |f_est(x_g) - f_true(x_g)|^2).
double wrmse(const VectorField& f_est, const VectorField& f_true,
             const EvaluationGrid& grid);
double wrmse(const gp::DriftField& f_est, const VectorField& f_true,
             const EvaluationGrid& grid);

struct AngleField {
  Vector estimated;  // atan2(f_2, f_1) per grid point
  Vector truth;
  std::vector<bool> valid;  // false where either field is below 1e-8 in norm
};

AngleField angle_field(const VectorField& f_est, const VectorField& f_true,
                       const Points& grid);

/// Exact 1-D earth mover's distance between empirical distributions of
/// possibly different sizes.
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

/// Mean over `directions` (rows, normalized internally) of the 1-D EMD of the
/// projections.
double sliced_wasserstein(const Points& A, const Points& B, const Matrix& directions);
/// Same with `n_projections` seeded random directions.
double sliced_wasserstein(const Points& A, const Points& B, int n_projections,
                          std::uint64_t seed);

/// Mean sliced EMD between the marginals of two segments at `times`.
/// Throws DomainError when the horizons differ or a time is off the grid.
double bridge_marginal_distance(const bridge::BridgeSegment& segment,
                                const bridge::BridgeSegment& reference,
                                const std::vector<double>& times,
                                int n_projections = 32, std::uint64_t seed = 0);

struct ReferenceOptions {
  double tolerance = 0.1;
  double min_acceptance = 1e-4;
  long batch = 4096;
  long min_attempts_before_check = 100000;
};

/// Ground-truth bridges by rejection: forward simulations from `a` that end
/// within the tolerance of `b`. Throws InfeasibleReference when the
/// acceptance rate falls below `min_acceptance`.
bridge::BridgeSegment reference_bridge(const sde::SdeSystem& system,
                                       const Vector& a, const Vector& b,
                                       double tau, double dt, int n_samples,
                                       std::uint64_t seed,
                                       const ReferenceOptions& opt = {});

// ---------------------------------------------------------------------------
// Scenarios

enum class Method { naive, ou, geometric, brownian };
const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct ScenarioSpec {
  std::string id = "scenario";
  double mu = 2.0;
  double dt = 0.01;
  Vector x0;
  std::vector<double> sigmas;
  std::vector<int> tau_steps;
  std::vector<double> durations;  // T
  std::vector<std::uint64_t> seeds;
  std::vector<Method> methods;
  em::EMConfig em;     // kernel, iterations, ...; sigma and seed set per cell
  int grid_n = 30;
  double grid_pad = 0.1;

  void validate() const;
};

struct ResultRow {
  std::string scenario;
  Method method;
  double sigma;
  int tau_steps;
  double T;
  std::uint64_t seed;
  int iteration;
  double wrmse;
  double runtime_s;
};

struct ScenarioCell {
  Method method;
  double sigma;
  int tau_steps;
  double T;
  std::uint64_t seed;
  em::EMHistory history;
  std::optional<std::string> failure;
};

struct ScenarioResult {
  std::string id;
  std::vector<ResultRow> rows;
  std::vector<ScenarioCell> cells;

  bool complete() const;
};

/// One cell: simulate the Van der Pol system, subsample, run the method and
/// score each iteration against the true drift on the KDE-weighted grid.
ScenarioCell run_cell(const ScenarioSpec& spec, Method method, double sigma,
                      int tau_steps, double T, std::uint64_t seed);

ScenarioResult run_scenario(const ScenarioSpec& spec);

/// `scenario,method,sigma,tau_steps,T,seed,iteration,wrmse,runtime_s`.
void write_results_csv(std::ostream& os, const ScenarioResult& result);

// ---------------------------------------------------------------------------
// Bridge-quality comparison on one interval

struct BridgeComparisonSpec {
  double mu = 2.0;
  double sigma = 0.25;
  double dt = 0.01;
  int tau_steps = 80;
  double T = 100.0;       // observation record for the drift estimate
  Vector x0;
  std::optional<long> interval;  // default: middle interval
  double beta = 1.0;
  KernelSpec kernel;
  int particles = 100;
  int score_inducing = 40;
  int samples = 500;
  int n_slices = 7;       // equally spaced interior comparison times
  int n_projections = 32;
  geometry::MetricParams metric;
  std::optional<geometry::Direction> direction;
  ReferenceOptions reference;
  std::uint64_t seed = 0;
};

struct BridgeComparison {
  Vector start, end;
  std::vector<double> times;
  bridge::BridgeSegment reference, geometric, ou, brownian;
  double d_geometric = 0.0, d_ou = 0.0, d_brownian = 0.0;
};

/// Builds the drift estimate from the observations (Gaussian likelihood at
/// the observation interval), then compares geometric, OU and Brownian
/// bridges over one interval against rejection-sampled ground truth.
BridgeComparison compare_bridges(const BridgeComparisonSpec& spec);

}  // namespace geopath::eval
