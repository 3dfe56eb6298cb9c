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
#include <optional>
#include <string>
#include <vector>

#include "geopath/bridge.hpp"
#include "geopath/geometry.hpp"
#include "geopath/gp_drift.hpp"
#include "geopath/sde.hpp"

namespace geopath::em {

/// How the E-step fills in the latent path between observations.
enum class Augmentation {
  geometric,  // controlled bridges with the geodesic potential
  ou,         // exact bridges of the drift linearized at each interval start
  brownian,   // drift-free bridges
};

const char* to_string(Augmentation a);
Augmentation augmentation_from_string(const std::string& s);

struct EMConfig {
  int max_iterations = 2;
  Augmentation augmentation = Augmentation::geometric;
  double beta = 0.5;
  KernelSpec kernel;             // drift GP kernel (initial fit and M-step)
  Vector sigma;                  // noise amplitude
  int particles = 100;           // N
  int score_inducing = 40;       // M
  int mstep_inducing = 300;      // S
  int bridge_samples = 100;      // sampled paths per interval
  std::optional<double> dt_control;  // defaults to the observation grid dt
  double endpoint_tolerance = 0.1;
  double max_miss_rate = 0.2;
  /// The M-step keeps at most this many augmented states (deterministic
  /// systematic thinning with reweighting).
  long max_mstep_points = 100000;
  bridge::FlowDynamics dynamics = bridge::FlowDynamics::deterministic;
  int backward_substeps = 4;
  geometry::MetricParams metric;
  std::optional<geometry::Direction> direction;
  std::uint64_t seed = 0;

  void validate(int dim) const;  // throws InvalidParameter
};

struct IntervalFailure {
  std::size_t interval;
  std::string reason;
};

struct EStepResult {
  gp::WeightedStateData data;
  std::vector<IntervalFailure> failures;
  std::vector<double> miss_rates;  // NaN for failed intervals
  double free_energy = 0.0;        // mean over successful intervals
  std::vector<bridge::BridgeSegment> segments;  // only when requested
};

struct EMState {
  int iteration = 0;
  gp::DriftField drift;
  std::vector<IntervalFailure> failures;
  double free_energy = 0.0;      // 0 for the initial fit
  std::optional<double> wrmse;
  double runtime_s = 0.0;
};

struct EMHistory {
  std::vector<EMState> states;
  std::optional<geometry::GeodesicSchedule> schedule;
  std::optional<std::string> error;  // set when the run stopped early
};

/// Iteration-0 estimate: treats consecutive observations as a path sampled
/// with step tau, f(x) = k(x, O)(K + sigma^2/tau I)^{-1} (O_{k+1} - O_k)/tau.
gp::DriftField initial_fit(const sde::ObservationSet& obs, const KernelSpec& kernel,
                           const Vector& sigma);

/// Bridge augmentation of every interval under the current drift estimate.
/// Intervals whose bridges fail are replaced by straight-chord data and
/// reported; more than half failing is an error.
EStepResult e_step(const gp::DriftField& drift, const sde::ObservationSet& obs,
                   const geometry::GeodesicSchedule* schedule, const EMConfig& cfg,
                   int iteration, bool keep_segments = false);

/// Sparse refit on the augmented states.
gp::DriftField m_step(const gp::WeightedStateData& data, const EMConfig& cfg,
                      int iteration);

/// Deterministic thinning to at most `max_points` rows (weights rescaled so
/// the total is unchanged).
gp::WeightedStateData thin(const gp::WeightedStateData& data, long max_points);

using DriftScore = std::function<double(const gp::DriftField&)>;

/// Full EM loop. `score` (e.g. wRMSE against a known drift) is recorded per
/// iteration when given. On failure the partial history is returned with
/// `error` set.
EMHistory run_em(const sde::ObservationSet& obs, const EMConfig& cfg,
                 const DriftScore& score = {});

}  // namespace geopath::em
