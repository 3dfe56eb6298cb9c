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

#include "geopath/types.hpp"

namespace geopath::sde {

/// dX = f(X) dt + diag(sigma) dW. Only diagonal noise is supported.
class SdeSystem {
 public:
  SdeSystem(int dim, VectorField drift, Vector noise_amplitude);

  /// Rejects any noise matrix with non-zero off-diagonal entries.
  static SdeSystem with_noise_matrix(int dim, VectorField drift,
                                     const Matrix& sigma);

  int dim() const { return dim_; }
  const VectorField& drift() const { return drift_; }
  const Vector& noise() const { return noise_; }
  /// D = sigma^2, the diagonal of the noise covariance.
  Vector diffusion() const { return noise_.array().square(); }

 private:
  int dim_;
  VectorField drift_;
  Vector noise_;
};

struct Trajectory {
  double dt = 0.0;
  Points states;  // (n_steps + 1) x d
  std::uint64_t seed = 0;

  Eigen::Index n_steps() const { return states.rows() - 1; }
  int dim() const { return static_cast<int>(states.cols()); }
  double duration() const { return dt * static_cast<double>(n_steps()); }
};

struct ObservationSet {
  Points states;  // K x d
  Vector times;   // K, equally spaced by tau
  int tau_steps = 1;
  double dt = 0.0;

  Eigen::Index size() const { return states.rows(); }
  int dim() const { return static_cast<int>(states.cols()); }
  double tau() const { return dt * tau_steps; }
  void validate() const;
};

/// f(x, y) = (mu (x - x^3/3 - y), x / mu).
VectorField van_der_pol_drift(double mu);

Trajectory euler_maruyama_simulate(const SdeSystem& system, const Vector& x0,
                                   double dt, long n_steps, std::uint64_t seed);

ObservationSet subsample_observations(const Trajectory& traj, int tau_steps);

/// Further thins an observation set by `factor` (factor 1 is the identity).
ObservationSet subsample_observations(const ObservationSet& obs, int factor);

}  // namespace geopath::sde
