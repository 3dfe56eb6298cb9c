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
#include <functional>
#include <vector>

#include "geopath/gp_drift.hpp"
#include "geopath/score.hpp"
#include "geopath/types.hpp"

namespace geopath::bridge {

/// Particle dynamics of the flows. `deterministic` transports particles with
/// the probability-flow velocity (f - (D/2) grad log rho forward); only the
/// initial spread is random. `stochastic` uses Euler-Maruyama particles.
enum class FlowDynamics { deterministic, stochastic };

/// One inter-observation interval of the path-augmentation problem: bridge the
/// prior dX = f(X) dt + sigma dW from `start` to `end` over `horizon`, with an
/// optional path potential U_G(x, t) = beta |guide(t) - x|^2.
struct ControlProblem {
  VectorField prior_drift;
  Vector sigma;
  Vector start;
  Vector end;
  double horizon = 1.0;
  double dt = 0.01;
  double beta = 0.0;
  std::function<Vector(double)> guide;  // local time in [0, horizon]
  int particles = 100;
  score::ScoreOptions score;
  FlowDynamics dynamics = FlowDynamics::deterministic;
  /// Sub-steps per dt in the deterministic reversed flow (its velocity is
  /// stiff near both ends of the interval).
  int backward_substeps = 4;

  int steps() const;
  void validate() const;  // throws InvalidParameter
};

/// Particle ensemble at one time slice. `time` is always forward time in
/// [0, horizon], also for the time-reversed flow. `score` is empty for
/// slices where the ensemble is a point mass.
struct FlowSnapshot {
  double time = 0.0;
  Points particles;
  Vector weights;
  score::ScoreFunction score;
};

using Flow = std::vector<FlowSnapshot>;

/// Filtered flow rho_t: particles start at `start`, follow the prior drift,
/// are reweighted by exp(-U_G dt) each step and systematically resampled when
/// the effective sample size drops below N/2. Throws DegeneracyError when the
/// ESS falls below 5.
Flow forward_flow(const ControlProblem& prob, std::uint64_t seed);

/// Time-reversed flow q: particles start at `end`, jittered by sigma sqrt(dt),
/// and follow D grad log rho_{T-s} - f (- (D/2) grad log q for deterministic
/// dynamics) in reversed time. The jittered cloud is taken as the slice one
/// step before the end; slice j sits at forward time horizon - (j + 1) dt,
/// down to dt.
Flow backward_flow(const Flow& forward, const ControlProblem& prob,
                   std::uint64_t seed);

/// u*(x, t) = D (grad log q(x, t) - grad log rho(x, t)), linearly
/// interpolated in time between slices; D = sigma^2 is already applied.
class Control {
 public:
  struct Slice {
    double time;
    score::ScoreFunction score;
  };
  Control(std::vector<Slice> forward, std::vector<Slice> backward, Vector sigma,
          double horizon);

  Points operator()(const Points& X, double t) const;
  double horizon() const { return horizon_; }

  /// Linear-in-time interpolation of slice scores, clamped at the ends.
  /// `slices` must be sorted by time.
  static Points interpolate(const std::vector<Slice>& slices, const Points& X,
                            double t);

 private:
  std::vector<Slice> fwd_, bwd_;  // sorted by time
  Vector diffusion_;
  double horizon_;
};

Control optimal_control(const Flow& forward, const Flow& backward,
                        const Vector& sigma);

/// Sampled paths over one interval plus the effective drift applied at each
/// step (the M-step responses).
struct BridgeSegment {
  double dt = 0.0;
  Vector times;               // n + 1 local times
  std::vector<Points> states; // n + 1 slices, each n_samples x d
  std::vector<Points> drifts; // n slices, effective drift at states[i]
  Vector start, end;
  double tolerance = 0.0;
  double terminal_miss_rate = 0.0;
  double control_cost = 0.0;  // mean over samples of (1/2) sum |u|^2_sigma dt

  Eigen::Index samples() const { return states.empty() ? 0 : states.front().rows(); }
  Eigen::Index steps() const { return static_cast<Eigen::Index>(drifts.size()); }
  int dim() const { return static_cast<int>(start.size()); }

  /// States 0..n-1 with weights dt / n_samples and effective-drift responses.
  gp::WeightedStateData as_weighted_data() const;
};

struct SampleOptions {
  double tolerance = 0.1;      // terminal endpoint tolerance (state units)
  double max_miss_rate = 0.2;  // above this a BridgeQualityError is thrown
};

/// Euler-Maruyama under g = f + u*. The final step into the observation is
/// taken without noise (the endpoint is an exact observation).
BridgeSegment sample_bridge(const ControlProblem& prob, const Control& control,
                            int n_samples, std::uint64_t seed,
                            const SampleOptions& opt = {});

/// Runs forward flow, backward flow, control construction and sampling.
BridgeSegment controlled_bridge(const ControlProblem& prob, int n_samples,
                                std::uint64_t seed, const SampleOptions& opt = {});

/// Drift-free bridge with analytic drift (b - x) / (tau - t).
BridgeSegment brownian_bridge_baseline(const Vector& a, const Vector& b,
                                       const Vector& sigma, double tau,
                                       double dt, int n_samples,
                                       std::uint64_t seed,
                                       const SampleOptions& opt = {});

/// dX = (A x + c) dt + sigma dW.
struct LinearSde {
  Matrix A;
  Vector c;
  Vector sigma;
};

/// First-order expansion of f at x0 by central finite differences.
LinearSde linearize(const VectorField& f, const Vector& x0, const Vector& sigma);

struct GaussianMarginal {
  Vector mean;
  Matrix cov;
};

/// Exact marginal at time t of the linear SDE started at a and conditioned on
/// hitting b at tau.
GaussianMarginal linear_bridge_marginal(const LinearSde& sde, const Vector& a,
                                        const Vector& b, double tau, double t);

/// Exact sampling of the linear bridge on the dt grid (sequential Gaussian
/// conditionals). Recorded drifts are the bridge's effective drift
/// A x + c + D grad log phi(x, t).
BridgeSegment linear_bridge_sample(const LinearSde& sde, const Vector& a,
                                   const Vector& b, double tau, double dt,
                                   int n_samples, std::uint64_t seed,
                                   const SampleOptions& opt = {});

/// Bridge of f linearized at `linearization_point`.
BridgeSegment ou_bridge_baseline(const VectorField& f,
                                 const Vector& linearization_point,
                                 const Vector& a, const Vector& b,
                                 const Vector& sigma, double tau, double dt,
                                 int n_samples, std::uint64_t seed,
                                 const SampleOptions& opt = {});

}  // namespace geopath::bridge
