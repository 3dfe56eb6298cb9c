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

#include "geopath/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <charconv>
#include <numeric>

#include "geopath/errors.hpp"
#include "geopath/kernels.hpp"
#include "geopath/rng.hpp"

namespace geopath::eval {

double silverman_bandwidth(const Points& obs) {
  const Eigen::Index n = obs.rows();
  const Eigen::Index d = obs.cols();
  if (n < 2) throw InvalidParameter("bandwidth: need at least two observations");
  const Vector mean = obs.colwise().mean();
  const Vector sd =
      ((obs.rowwise() - mean.transpose()).cwiseAbs2().colwise().sum() / (n - 1.0))
          .cwiseSqrt();
  const double factor = std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) *
                        std::pow(static_cast<double>(n), -1.0 / (d + 4.0));
  const double h = factor * sd.mean();
  if (!(h > 0.0)) throw InvalidParameter("bandwidth: observations have no spread");
  return h;
}

Vector kde_weights(const Points& obs, const Points& grid, double bandwidth) {
  if (!(bandwidth > 0.0)) throw InvalidParameter("kde: bandwidth must be > 0");
  if (obs.cols() != grid.cols()) throw InvalidParameter("kde: dimension mismatch");
  Vector w = kernels::gaussian_kde(grid, obs, bandwidth);
  double s = w.sum();
  if (!(s > 0.0)) {
    // Everything underflowed: redo in log space.
    Vector lw(grid.rows());
    for (Eigen::Index g = 0; g < grid.rows(); ++g) {
      const Vector d2 = (obs.rowwise() - grid.row(g)).rowwise().squaredNorm();
      const Vector e = -d2 / (2.0 * bandwidth * bandwidth);
      const double m = e.maxCoeff();
      lw(g) = m + std::log((e.array() - m).exp().sum());
    }
    w = (lw.array() - lw.maxCoeff()).exp();
    s = w.sum();
  }
  return w / s;
}

EvaluationGrid make_grid(const Points& obs, int n, double pad,
                         std::optional<double> bandwidth) {
  if (obs.cols() != 2) throw InvalidParameter("grid: only 2-D state spaces are supported");
  if (n < 2) throw InvalidParameter("grid: need n >= 2");
  if (!(pad >= 0.0)) throw InvalidParameter("grid: padding must be >= 0");
  const Vector lo = obs.colwise().minCoeff(), hi = obs.colwise().maxCoeff();
  const Vector ext = hi - lo;
  const Vector a = lo - pad * ext, b = hi + pad * ext;
  EvaluationGrid g;
  g.nx = g.ny = n;
  g.points.resize(static_cast<Eigen::Index>(n) * n, 2);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(j) * n + i;
      g.points(r, 0) = a(0) + (b(0) - a(0)) * i / (n - 1.0);
      g.points(r, 1) = a(1) + (b(1) - a(1)) * j / (n - 1.0);
    }
  g.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(obs);
  g.weights = kde_weights(obs, g.points, g.bandwidth);
  return g;
}

double wrmse(const VectorField& f_est, const VectorField& f_true,
             const EvaluationGrid& grid) {
  const Points e = f_est(grid.points) - f_true(grid.points);
  return std::sqrt(grid.weights.dot(e.rowwise().squaredNorm()));
}

double wrmse(const gp::DriftField& f_est, const VectorField& f_true,
             const EvaluationGrid& grid) {
  return wrmse(f_est.as_function(), f_true, grid);
}

AngleField angle_field(const VectorField& f_est, const VectorField& f_true,
                       const Points& grid) {
  if (grid.cols() != 2) throw InvalidParameter("angles: only 2-D fields");
  const Points e = f_est(grid), t = f_true(grid);
  AngleField out;
  out.estimated.resize(grid.rows());
  out.truth.resize(grid.rows());
  out.valid.resize(grid.rows());
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    out.estimated(g) = std::atan2(e(g, 1), e(g, 0));
    out.truth(g) = std::atan2(t(g, 1), t(g, 0));
    out.valid[g] = e.row(g).norm() >= 1e-8 && t.row(g).norm() >= 1e-8;
  }
  return out;
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidParameter("emd: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a - F_b| over the merged breakpoints.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, x = std::min(a[0], b[0]), total = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    total += std::abs(fa - fb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) { ++i; fa = i / na; }
    while (j < b.size() && b[j] == x) { ++j; fb = j / nb; }
  }
  return total;
}

double sliced_wasserstein(const Points& A, const Points& B, const Matrix& directions) {
  if (A.cols() != B.cols() || directions.cols() != A.cols())
    throw InvalidParameter("sliced emd: dimension mismatch");
  if (directions.rows() == 0) throw InvalidParameter("sliced emd: no directions");
  double s = 0.0;
  for (Eigen::Index p = 0; p < directions.rows(); ++p) {
    const Vector u = directions.row(p).transpose().normalized();
    const Vector pa = A * u, pb = B * u;
    s += wasserstein1_1d({pa.data(), pa.data() + pa.size()},
                         {pb.data(), pb.data() + pb.size()});
  }
  return s / static_cast<double>(directions.rows());
}

double sliced_wasserstein(const Points& A, const Points& B, int n_projections,
                          std::uint64_t seed) {
  if (n_projections < 1) throw InvalidParameter("sliced emd: need >= 1 projection");
  Rng rng(seed, {0x5EED});
  Matrix dirs = rng.normal_matrix(n_projections, A.cols());
  for (Eigen::Index p = 0; p < dirs.rows(); ++p)
    if (dirs.row(p).norm() == 0.0) dirs(p, 0) = 1.0;
  return sliced_wasserstein(A, B, dirs);
}

namespace {
Eigen::Index slice_index(const bridge::BridgeSegment& s, double t) {
  const double r = t / s.dt;
  const long i = std::lround(r);
  if (std::abs(r - static_cast<double>(i)) > 1e-6 || i < 0 || i > s.steps())
    throw DomainError("marginal distance: time " + std::to_string(t) + " is off the grid");
  return i;
}
}  // namespace

double bridge_marginal_distance(const bridge::BridgeSegment& segment,
                                const bridge::BridgeSegment& reference,
                                const std::vector<double>& times, int n_projections,
                                std::uint64_t seed) {
  const double ha = segment.dt * segment.steps(), hb = reference.dt * reference.steps();
  if (std::abs(ha - hb) > 1e-9 * std::max(1.0, ha))
    throw DomainError("marginal distance: segments have different horizons");
  if (times.empty()) throw InvalidParameter("marginal distance: no times");
  double s = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const Points& A = segment.states[slice_index(segment, times[k])];
    const Points& B = reference.states[slice_index(reference, times[k])];
    s += sliced_wasserstein(A, B, n_projections, derive_seed(seed, {k}));
  }
  return s / static_cast<double>(times.size());
}

bridge::BridgeSegment reference_bridge(const sde::SdeSystem& system, const Vector& a,
                                       const Vector& b, double tau, double dt,
                                       int n_samples, std::uint64_t seed,
                                       const ReferenceOptions& opt) {
  const int d = system.dim();
  if (a.size() != d || b.size() != d) throw InvalidParameter("reference: dimension mismatch");
  if (n_samples < 1) throw InvalidParameter("reference: need at least one sample");
  if (!(dt > 0.0) || !(tau > 0.0)) throw InvalidParameter("reference: tau, dt must be > 0");
  const long n = std::lround(tau / dt);
  if (n < 1 || std::abs(tau / dt - n) > 1e-6 * std::max(1.0, tau / dt))
    throw InvalidParameter("reference: tau must be a multiple of dt");

  std::vector<Points> paths;  // accepted, each (n + 1) x d
  long attempts = 0;
  const Vector sd = system.noise() * std::sqrt(dt);
  for (std::uint64_t batch = 0; static_cast<int>(paths.size()) < n_samples; ++batch) {
    Rng rng(seed, {batch});
    std::vector<Points> traj(n + 1);
    traj[0] = a.transpose().replicate(opt.batch, 1);
    for (long i = 0; i < n; ++i)
      traj[i + 1] = traj[i] + system.drift()(traj[i]) * dt +
                    rng.normal_matrix(opt.batch, d) * sd.asDiagonal();
    for (long j = 0; j < opt.batch && static_cast<int>(paths.size()) < n_samples; ++j) {
      ++attempts;
      if ((traj[n].row(j).transpose() - b).norm() > opt.tolerance) continue;
      Points p(n + 1, d);
      for (long i = 0; i <= n; ++i) p.row(i) = traj[i].row(j);
      paths.push_back(std::move(p));
    }
    const double rate = static_cast<double>(paths.size()) / static_cast<double>(attempts);
    if (attempts >= opt.min_attempts_before_check && rate < opt.min_acceptance)
      throw InfeasibleReference(rate, "reference: acceptance rate " + std::to_string(rate) +
                                          " below " + std::to_string(opt.min_acceptance));
  }

  bridge::BridgeSegment seg;
  seg.dt = dt;
  seg.start = a;
  seg.end = b;
  seg.tolerance = opt.tolerance;
  seg.times.resize(n + 1);
  for (long i = 0; i <= n; ++i) seg.times(i) = i * dt;
  for (long i = 0; i <= n; ++i) {
    Points s(n_samples, d);
    for (int j = 0; j < n_samples; ++j) s.row(j) = paths[j].row(i);
    seg.states.push_back(std::move(s));
  }
  for (long i = 0; i < n; ++i) seg.drifts.push_back((seg.states[i + 1] - seg.states[i]) / dt);
  return seg;
}

// ---------------------------------------------------------------------------

const char* to_string(Method m) {
  switch (m) {
    case Method::naive: return "naive";
    case Method::ou: return "ou";
    case Method::geometric: return "geometric";
    case Method::brownian: return "brownian";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "naive") return Method::naive;
  if (s == "ou") return Method::ou;
  if (s == "geometric") return Method::geometric;
  if (s == "brownian") return Method::brownian;
  throw InvalidParameter("unknown method '" + s + "'");
}

void ScenarioSpec::validate() const {
  if (id.empty()) throw InvalidParameter("scenario id must not be empty");
  if (!(mu > 0.0)) throw InvalidParameter("mu must be > 0");
  if (!(dt > 0.0)) throw InvalidParameter("dt must be > 0");
  if (x0.size() != 2) throw InvalidParameter("x0 must have two entries");
  if (sigmas.empty() || tau_steps.empty() || durations.empty() || seeds.empty() ||
      methods.empty())
    throw InvalidParameter("scenario needs at least one sigma, tau, T, seed and method");
  for (double s : sigmas)
    if (!(s > 0.0)) throw InvalidParameter("sigma values must be > 0");
  for (int t : tau_steps)
    if (t < 1) throw InvalidParameter("tau_steps values must be >= 1");
  for (double T : durations)
    if (!(T > 0.0)) throw InvalidParameter("T values must be > 0");
  if (grid_n < 2) throw InvalidParameter("grid_n must be >= 2");
}

bool ScenarioResult::complete() const {
  return std::none_of(cells.begin(), cells.end(), [](const ScenarioCell& c) {
    return c.failure.has_value() || c.history.error.has_value();
  });
}

ScenarioCell run_cell(const ScenarioSpec& spec, Method method, double sigma,
                      int tau_steps, double T, std::uint64_t seed) {
  ScenarioCell cell{method, sigma, tau_steps, T, seed, {}, std::nullopt};
  try {
    const VectorField truth = sde::van_der_pol_drift(spec.mu);
    const sde::SdeSystem sys(2, truth, Vector::Constant(2, sigma));
    const long n = std::lround(T / spec.dt);
    const auto traj = sde::euler_maruyama_simulate(sys, spec.x0, spec.dt, n, seed);
    const auto obs = sde::subsample_observations(traj, tau_steps);
    const EvaluationGrid grid = make_grid(obs.states, spec.grid_n, spec.grid_pad);

    em::EMConfig cfg = spec.em;
    cfg.sigma = Vector::Constant(2, sigma);
    cfg.seed = derive_seed(seed, {1});
    if (method == Method::naive) cfg.max_iterations = 0;
    if (method == Method::ou) cfg.augmentation = em::Augmentation::ou;
    if (method == Method::geometric) cfg.augmentation = em::Augmentation::geometric;
    if (method == Method::brownian) cfg.augmentation = em::Augmentation::brownian;
    cell.history = em::run_em(obs, cfg, [&](const gp::DriftField& f) {
      return wrmse(f, truth, grid);
    });
  } catch (const Error& e) {
    cell.failure = e.what();
  }
  return cell;
}

ScenarioResult run_scenario(const ScenarioSpec& spec) {
  spec.validate();
  struct Key {
    Method m;
    double sigma;
    int tau;
    double T;
    std::uint64_t seed;
  };
  std::vector<Key> keys;
  for (double s : spec.sigmas)
    for (int t : spec.tau_steps)
      for (double T : spec.durations)
        for (auto seed : spec.seeds)
          for (Method m : spec.methods) keys.push_back({m, s, t, T, seed});

  ScenarioResult res;
  res.id = spec.id;
  res.cells.resize(keys.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < static_cast<long>(keys.size()); ++i) {
    const Key& k = keys[i];
    res.cells[i] = run_cell(spec, k.m, k.sigma, k.tau, k.T, k.seed);
  }
  for (const auto& c : res.cells)
    for (const auto& s : c.history.states)
      res.rows.push_back({spec.id, c.method, c.sigma, c.tau_steps, c.T, c.seed,
                          s.iteration, s.wrmse.value_or(std::nan("")), s.runtime_s});
  return res;
}

namespace {
std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}
}  // namespace

void write_results_csv(std::ostream& os, const ScenarioResult& result) {
  os << "scenario,method,sigma,tau_steps,T,seed,iteration,wrmse,runtime_s\n";
  for (const auto& r : result.rows)
    os << r.scenario << ',' << to_string(r.method) << ',' << num(r.sigma) << ','
       << r.tau_steps << ',' << num(r.T) << ',' << r.seed << ',' << r.iteration << ','
       << num(r.wrmse) << ',' << num(r.runtime_s) << '\n';
}

// ---------------------------------------------------------------------------

BridgeComparison compare_bridges(const BridgeComparisonSpec& spec) {
  if (spec.x0.size() != 2) throw InvalidParameter("comparison: x0 must have two entries");
  if (spec.n_slices < 1) throw InvalidParameter("comparison: need >= 1 slice");
  const VectorField truth = sde::van_der_pol_drift(spec.mu);
  const Vector sigma = Vector::Constant(2, spec.sigma);
  const sde::SdeSystem sys(2, truth, sigma);
  const long n = std::lround(spec.T / spec.dt);
  const auto traj = sde::euler_maruyama_simulate(sys, spec.x0, spec.dt, n, spec.seed);
  const auto obs = sde::subsample_observations(traj, spec.tau_steps);
  const long n_int = obs.size() - 1;
  const long k = spec.interval.value_or(n_int / 2);
  if (k < 0 || k >= n_int) throw InvalidParameter("comparison: interval out of range");

  BridgeComparison out;
  out.start = obs.states.row(k).transpose();
  out.end = obs.states.row(k + 1).transpose();
  const double tau = obs.tau();
  for (int s = 1; s <= spec.n_slices; ++s) {
    const long i = std::lround(static_cast<double>(s) * spec.tau_steps / (spec.n_slices + 1));
    out.times.push_back(i * spec.dt);
  }

  const gp::DriftField fhat = em::initial_fit(obs, spec.kernel, sigma);
  const VectorField prior = fhat.as_function();
  bridge::SampleOptions sopt;
  sopt.max_miss_rate = 1.0;  // report quality through the distances instead

  out.reference = reference_bridge(sys, out.start, out.end, tau, spec.dt, spec.samples,
                                   derive_seed(spec.seed, {1}), spec.reference);
  const auto schedule = geometry::build_geodesic_schedule(obs, spec.metric, spec.direction);
  bridge::ControlProblem p;
  p.prior_drift = prior;
  p.sigma = sigma;
  p.start = out.start;
  p.end = out.end;
  p.horizon = tau;
  p.dt = spec.dt;
  p.beta = spec.beta;
  p.guide = schedule.guide(static_cast<std::size_t>(k));
  p.particles = spec.particles;
  p.score.inducing = spec.score_inducing;
  out.geometric = bridge::controlled_bridge(p, spec.samples, derive_seed(spec.seed, {2}), sopt);
  out.ou = bridge::ou_bridge_baseline(prior, out.start, out.start, out.end, sigma, tau,
                                      spec.dt, spec.samples, derive_seed(spec.seed, {3}), sopt);
  out.brownian = bridge::brownian_bridge_baseline(out.start, out.end, sigma, tau, spec.dt,
                                                  spec.samples, derive_seed(spec.seed, {4}),
                                                  sopt);
  const std::uint64_t ps = derive_seed(spec.seed, {5});
  out.d_geometric = bridge_marginal_distance(out.geometric, out.reference, out.times,
                                             spec.n_projections, ps);
  out.d_ou = bridge_marginal_distance(out.ou, out.reference, out.times, spec.n_projections, ps);
  out.d_brownian = bridge_marginal_distance(out.brownian, out.reference, out.times,
                                            spec.n_projections, ps);
  return out;
}

}  // namespace geopath::eval
