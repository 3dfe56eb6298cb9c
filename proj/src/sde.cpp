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

#include "geopath/sde.hpp"

#include <cmath>
#include <string>

#include "geopath/errors.hpp"
#include "geopath/rng.hpp"

namespace geopath::sde {

SdeSystem::SdeSystem(int dim, VectorField drift, Vector noise_amplitude)
    : dim_(dim), drift_(std::move(drift)), noise_(std::move(noise_amplitude)) {
  if (dim_ < 1) throw InvalidParameter("sde: dimension must be >= 1");
  if (noise_.size() != dim_)
    throw InvalidParameter("sde: noise amplitude must have one entry per dimension");
  if (!(noise_.array() >= 0.0).all() || !noise_.allFinite())
    throw InvalidParameter("sde: noise amplitudes must be finite and >= 0");
  if (!drift_) throw InvalidParameter("sde: drift function is empty");
}

SdeSystem SdeSystem::with_noise_matrix(int dim, VectorField drift,
                                       const Matrix& sigma) {
  if (sigma.rows() != dim || sigma.cols() != dim)
    throw InvalidParameter("sde: noise matrix must be d x d");
  Matrix off = sigma;
  off.diagonal().setZero();
  if (off.cwiseAbs().maxCoeff() != 0.0)
    throw InvalidParameter("sde: only diagonal noise is supported");
  return SdeSystem(dim, std::move(drift), sigma.diagonal());
}

void ObservationSet::validate() const {
  if (states.rows() < 2) throw InvalidParameter("observations: need K >= 2");
  if (times.size() != states.rows())
    throw InvalidParameter("observations: times/states size mismatch");
  if (tau_steps < 1 || !(dt > 0.0))
    throw InvalidParameter("observations: tau_steps >= 1 and dt > 0 required");
  const double tau = this->tau();
  for (Eigen::Index k = 1; k < times.size(); ++k) {
    const double gap = times(k) - times(k - 1);
    if (!(gap > 0.0) || std::abs(gap - tau) > 1e-9 * std::max(1.0, tau))
      throw InvalidParameter("observations: timestamps must be spaced by tau");
  }
}

VectorField van_der_pol_drift(double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu))
    throw InvalidParameter("van der pol: mu must be > 0");
  return [mu](const Points& X) {
    if (X.cols() != 2) throw InvalidParameter("van der pol: states must be 2-D");
    Points F(X.rows(), 2);
    const auto x = X.col(0).array();
    const auto y = X.col(1).array();
    F.col(0) = (mu * (x - x.cube() / 3.0 - y)).matrix();
    F.col(1) = (x / mu).matrix();
    return F;
  };
}

Trajectory euler_maruyama_simulate(const SdeSystem& system, const Vector& x0,
                                   double dt, long n_steps, std::uint64_t seed) {
  if (!(dt > 0.0)) throw InvalidParameter("simulate: dt must be > 0");
  if (n_steps < 1) throw InvalidParameter("simulate: n_steps must be >= 1");
  if (x0.size() != system.dim())
    throw InvalidParameter("simulate: x0 dimension mismatch");
  const int d = system.dim();
  Trajectory traj;
  traj.dt = dt;
  traj.seed = seed;
  traj.states.resize(n_steps + 1, d);
  traj.states.row(0) = x0.transpose();
  Rng rng(seed);
  const Eigen::RowVectorXd scale = (system.noise() * std::sqrt(dt)).transpose();
  Points x = traj.states.row(0);
  for (long k = 0; k < n_steps; ++k) {
    const Points f = system.drift()(x);
    if (!f.allFinite())
      throw SimulationDiverged(k, "simulate: non-finite drift at step " +
                                      std::to_string(k));
    Eigen::RowVectorXd noise(d);
    for (int c = 0; c < d; ++c) noise(c) = rng.normal();
    x += f * dt + noise.cwiseProduct(scale);
    if (!x.allFinite())
      throw SimulationDiverged(k, "simulate: state diverged at step " +
                                      std::to_string(k));
    traj.states.row(k + 1) = x;
  }
  return traj;
}

ObservationSet subsample_observations(const Trajectory& traj, int tau_steps) {
  if (tau_steps < 1 || tau_steps > traj.n_steps())
    throw InvalidParameter("subsample: tau_steps must lie in [1, n_steps]");
  const Eigen::Index K = traj.n_steps() / tau_steps + 1;
  ObservationSet obs;
  obs.tau_steps = tau_steps;
  obs.dt = traj.dt;
  obs.states.resize(K, traj.dim());
  obs.times.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    obs.states.row(k) = traj.states.row(k * tau_steps);
    obs.times(k) = static_cast<double>(k * tau_steps) * traj.dt;
  }
  return obs;
}

ObservationSet subsample_observations(const ObservationSet& obs, int factor) {
  if (factor < 1 || factor > obs.size() - 1)
    throw InvalidParameter("subsample: factor out of range");
  const Eigen::Index K = (obs.size() - 1) / factor + 1;
  ObservationSet out;
  out.tau_steps = obs.tau_steps * factor;
  out.dt = obs.dt;
  out.states.resize(K, obs.dim());
  out.times.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    out.states.row(k) = obs.states.row(k * factor);
    out.times(k) = obs.times(k * factor);
  }
  return out;
}

}  // namespace geopath::sde
