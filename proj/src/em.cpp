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

#include "geopath/em.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "geopath/errors.hpp"
#include "geopath/rng.hpp"

namespace geopath::em {

const char* to_string(Augmentation a) {
  switch (a) {
    case Augmentation::geometric: return "geometric";
    case Augmentation::ou: return "ou";
    case Augmentation::brownian: return "brownian";
  }
  return "?";
}

Augmentation augmentation_from_string(const std::string& s) {
  if (s == "geometric") return Augmentation::geometric;
  if (s == "ou") return Augmentation::ou;
  if (s == "brownian") return Augmentation::brownian;
  throw InvalidParameter("unknown augmentation '" + s + "'");
}

void EMConfig::validate(int dim) const {
  if (max_iterations < 0) throw InvalidParameter("max_iterations must be >= 0");
  if (!(beta >= 0.0)) throw InvalidParameter("beta must be >= 0");
  kernel.validate(dim);
  if (sigma.size() != dim || !(sigma.array() > 0.0).all())
    throw InvalidParameter("sigma must be positive, one entry per dimension");
  if (particles < 10) throw InvalidParameter("particles must be >= 10");
  if (score_inducing < 1 || score_inducing > particles)
    throw InvalidParameter("score_inducing must lie in [1, particles]");
  if (mstep_inducing < 1) throw InvalidParameter("mstep_inducing must be >= 1");
  if (bridge_samples < 1) throw InvalidParameter("bridge_samples must be >= 1");
  if (dt_control && !(*dt_control > 0.0)) throw InvalidParameter("dt_control must be > 0");
  if (!(endpoint_tolerance > 0.0)) throw InvalidParameter("endpoint_tolerance must be > 0");
  if (!(max_miss_rate >= 0.0 && max_miss_rate <= 1.0))
    throw InvalidParameter("max_miss_rate must lie in [0, 1]");
  if (max_mstep_points < 1) throw InvalidParameter("max_mstep_points must be >= 1");
  if (backward_substeps < 1) throw InvalidParameter("backward_substeps must be >= 1");
}

gp::DriftField initial_fit(const sde::ObservationSet& obs, const KernelSpec& kernel,
                           const Vector& sigma) {
  obs.validate();
  if (obs.size() < 2) throw InvalidParameter("initial fit: need at least two observations");
  const Eigen::Index K = obs.size();
  const double tau = obs.tau();
  const Points X = obs.states.topRows(K - 1);
  const Matrix Y = (obs.states.bottomRows(K - 1) - X) / tau;
  return gp::girsanov_gp_fit(X, Y, tau, kernel, sigma, 1);
}

namespace {

// Straight-chord stand-in for an interval whose bridges failed.
gp::WeightedStateData chord_data(const Vector& a, const Vector& b, int n, double dt) {
  gp::WeightedStateData out;
  const Eigen::Index d = a.size();
  out.points.resize(n, d);
  out.responses.resize(n, d);
  const Vector g = (b - a) / (n * dt);
  for (int i = 0; i < n; ++i) {
    out.points.row(i) = (a + (static_cast<double>(i) / n) * (b - a)).transpose();
    out.responses.row(i) = g.transpose();
  }
  out.weights = Vector::Constant(n, dt);
  return out;
}

double potential_cost(const bridge::BridgeSegment& seg,
                      const std::function<Vector(double)>& guide, double beta) {
  if (!(beta > 0.0) || !guide) return 0.0;
  double c = 0.0;
  for (Eigen::Index i = 0; i < seg.steps(); ++i) {
    const Vector g = guide(seg.times(i));
    c += (seg.states[i].rowwise() - g.transpose()).rowwise().squaredNorm().sum();
  }
  return beta * seg.dt * c / static_cast<double>(seg.samples());
}

struct IntervalOutcome {
  gp::WeightedStateData data;
  std::optional<bridge::BridgeSegment> segment;
  std::string failure;
  double free_energy = 0.0;
  double miss_rate = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

EStepResult e_step(const gp::DriftField& drift, const sde::ObservationSet& obs,
                   const geometry::GeodesicSchedule* schedule, const EMConfig& cfg,
                   int iteration, bool keep_segments) {
  obs.validate();
  const int dim = obs.dim();
  cfg.validate(dim);
  const Eigen::Index n_int = obs.size() - 1;
  if (n_int < 1) throw InvalidParameter("e-step: need at least two observations");
  const bool geometric = cfg.augmentation == Augmentation::geometric;
  if (geometric && cfg.beta > 0.0 &&
      (!schedule || schedule->size() != static_cast<std::size_t>(n_int)))
    throw InvalidParameter("e-step: geodesic schedule does not cover all intervals");

  const double tau = obs.tau();
  const double dt = cfg.dt_control.value_or(obs.dt);
  const VectorField prior = drift.as_function();
  bridge::SampleOptions sopt;
  sopt.tolerance = cfg.endpoint_tolerance;
  sopt.max_miss_rate = cfg.max_miss_rate;

  std::vector<IntervalOutcome> results(n_int);
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index k = 0; k < n_int; ++k) {
    const Vector a = obs.states.row(k).transpose();
    const Vector b = obs.states.row(k + 1).transpose();
    const std::uint64_t seed =
        derive_seed(cfg.seed, {static_cast<std::uint64_t>(iteration),
                               static_cast<std::uint64_t>(k)});
    IntervalOutcome& out = results[k];
    std::function<Vector(double)> guide;
    if (geometric && cfg.beta > 0.0) guide = schedule->guide(static_cast<std::size_t>(k));
    try {
      bridge::BridgeSegment seg;
      switch (cfg.augmentation) {
        case Augmentation::geometric: {
          bridge::ControlProblem p;
          p.prior_drift = prior;
          p.sigma = cfg.sigma;
          p.start = a;
          p.end = b;
          p.horizon = tau;
          p.dt = dt;
          p.beta = cfg.beta;
          p.guide = guide;
          p.particles = cfg.particles;
          p.score.inducing = cfg.score_inducing;
          p.dynamics = cfg.dynamics;
          p.backward_substeps = cfg.backward_substeps;
          seg = bridge::controlled_bridge(p, cfg.bridge_samples, seed, sopt);
          break;
        }
        case Augmentation::ou:
          seg = bridge::ou_bridge_baseline(prior, a, a, b, cfg.sigma, tau, dt,
                                           cfg.bridge_samples, seed, sopt);
          break;
        case Augmentation::brownian:
          seg = bridge::brownian_bridge_baseline(a, b, cfg.sigma, tau, dt,
                                                 cfg.bridge_samples, seed, sopt);
          break;
      }
      out.data = seg.as_weighted_data();
      out.miss_rate = seg.terminal_miss_rate;
      out.free_energy = seg.control_cost + potential_cost(seg, guide, cfg.beta);
      if (keep_segments) out.segment = std::move(seg);
    } catch (const Error& e) {
      const int n = static_cast<int>(std::lround(tau / dt));
      out.data = chord_data(a, b, n, dt);
      out.failure = e.what();
    }
  }

  EStepResult res;
  std::vector<gp::WeightedStateData> parts;
  parts.reserve(n_int);
  double fe = 0.0;
  std::size_t ok = 0;
  for (Eigen::Index k = 0; k < n_int; ++k) {
    auto& r = results[k];
    parts.push_back(std::move(r.data));
    res.miss_rates.push_back(r.miss_rate);
    if (!r.failure.empty()) {
      res.failures.push_back({static_cast<std::size_t>(k), r.failure});
    } else {
      fe += r.free_energy;
      ++ok;
    }
    if (keep_segments && r.segment) res.segments.push_back(std::move(*r.segment));
  }
  if (2 * res.failures.size() > static_cast<std::size_t>(n_int))
    throw Error("e-step: " + std::to_string(res.failures.size()) + " of " +
                std::to_string(n_int) + " intervals failed; first: " +
                res.failures.front().reason);
  res.free_energy = ok > 0 ? fe / static_cast<double>(ok) : 0.0;
  res.data = gp::WeightedStateData::concatenate(parts);
  return res;
}

gp::WeightedStateData thin(const gp::WeightedStateData& data, long max_points) {
  if (data.size() <= max_points) return data;
  const gp::WeightedStateData ordered = gp::canonical_order(data);
  const Eigen::Index n = ordered.size();
  const Eigen::Index stride = (n + max_points - 1) / max_points;
  const Eigen::Index m = (n + stride - 1) / stride;
  gp::WeightedStateData out;
  out.points.resize(m, ordered.points.cols());
  out.responses.resize(m, ordered.responses.cols());
  out.weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.points.row(i) = ordered.points.row(i * stride);
    out.responses.row(i) = ordered.responses.row(i * stride);
    out.weights(i) = ordered.weights(i * stride);
  }
  out.weights *= data.total_weight() / out.weights.sum();
  return out;
}

gp::DriftField m_step(const gp::WeightedStateData& data, const EMConfig& cfg,
                      int iteration) {
  if (data.size() == 0) throw InvalidParameter("m-step: data is empty");
  const gp::WeightedStateData used = gp::canonical_order(thin(data, cfg.max_mstep_points));
  const Points Z = gp::select_inducing_points(
      used.points, cfg.mstep_inducing,
      derive_seed(cfg.seed, {static_cast<std::uint64_t>(iteration), 0xC0FFEEULL}));
  return gp::sparse_mstep_fit(used, Z, cfg.kernel, cfg.sigma);
}

EMHistory run_em(const sde::ObservationSet& obs, const EMConfig& cfg,
                 const DriftScore& score) {
  obs.validate();
  cfg.validate(obs.dim());
  using clock = std::chrono::steady_clock;
  EMHistory hist;

  auto t0 = clock::now();
  EMState s0;
  s0.iteration = 0;
  s0.drift = initial_fit(obs, cfg.kernel, cfg.sigma);
  if (score) s0.wrmse = score(s0.drift);
  s0.runtime_s = std::chrono::duration<double>(clock::now() - t0).count();
  hist.states.push_back(std::move(s0));
  if (cfg.max_iterations == 0) return hist;

  try {
    if (cfg.augmentation == Augmentation::geometric && cfg.beta > 0.0)
      hist.schedule = geometry::build_geodesic_schedule(obs, cfg.metric, cfg.direction);
    for (int it = 1; it <= cfg.max_iterations; ++it) {
      t0 = clock::now();
      const EStepResult e = e_step(hist.states.back().drift, obs,
                                   hist.schedule ? &*hist.schedule : nullptr, cfg, it);
      EMState s;
      s.iteration = it;
      s.drift = m_step(e.data, cfg, it);
      s.failures = e.failures;
      s.free_energy = e.free_energy;
      if (score) s.wrmse = score(s.drift);
      s.runtime_s = std::chrono::duration<double>(clock::now() - t0).count();
      hist.states.push_back(std::move(s));
    }
  } catch (const Error& e) {
    hist.error = e.what();
  }
  return hist;
}

}  // namespace geopath::em
