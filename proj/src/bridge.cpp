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

#include "geopath/bridge.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <string>

#include "geopath/errors.hpp"
#include "geopath/rng.hpp"
#include "linalg.hpp"
#include "particles.hpp"

namespace geopath::bridge {

namespace {

constexpr double kMinEss = 5.0;

void check_finite(const Points& X, long step, const char* what) {
  if (!X.allFinite())
    throw SimulationDiverged(step, std::string(what) + ": non-finite state at step " +
                                       std::to_string(step));
}

using detail::effective_sample_size;
using detail::systematic_resample;

Points diffusion_noise(Rng& rng, Eigen::Index n, const Vector& sigma, double dt) {
  Points z = rng.normal_matrix(n, sigma.size());
  return z * (sigma * std::sqrt(dt)).asDiagonal();
}

score::ScoreFunction fit_slice(const Points& X, const Vector& w,
                               const score::ScoreOptions& opt, std::uint64_t seed) {
  return score::as_function(score::estimate_score(X, &w, opt, seed));
}

double sigma_weighted_sq(const Eigen::Ref<const Eigen::RowVectorXd>& u,
                         const Vector& sigma) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < u.size(); ++c)
    if (sigma(c) > 0.0) s += u(c) * u(c) / (sigma(c) * sigma(c));
  return s;
}

void finish_segment(BridgeSegment& seg, const SampleOptions& opt) {
  const Points& last = seg.states.back();
  Eigen::Index miss = 0;
  for (Eigen::Index j = 0; j < last.rows(); ++j) {
    const double err = (last.row(j).transpose() - seg.end).norm();
    if (!(err <= opt.tolerance)) ++miss;
  }
  seg.tolerance = opt.tolerance;
  seg.terminal_miss_rate = static_cast<double>(miss) / static_cast<double>(last.rows());
  if (seg.terminal_miss_rate > opt.max_miss_rate)
    throw BridgeQualityError(seg.terminal_miss_rate,
                             "bridge: terminal miss rate " +
                                 std::to_string(seg.terminal_miss_rate) +
                                 " exceeds " + std::to_string(opt.max_miss_rate));
}

int step_count(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon > 0.0))
    throw InvalidParameter("bridge: horizon and dt must be positive");
  const double r = horizon / dt;
  const long n = std::lround(r);
  if (n < 1 || std::abs(r - static_cast<double>(n)) > 1e-6 * std::max(1.0, r))
    throw InvalidParameter("bridge: horizon must be a positive multiple of dt");
  return static_cast<int>(n);
}

void validate_endpoints(const Vector& a, const Vector& b, const Vector& sigma) {
  if (a.size() == 0 || a.size() != b.size() || sigma.size() != a.size())
    throw InvalidParameter("bridge: endpoint/noise dimension mismatch");
  if (!a.allFinite() || !b.allFinite())
    throw InvalidParameter("bridge: endpoints must be finite");
  if ((sigma.array() < 0.0).any() || !sigma.allFinite())
    throw InvalidParameter("bridge: sigma must be nonnegative");
}

BridgeSegment empty_segment(const Vector& a, const Vector& b, int n, double dt,
                            Eigen::Index samples) {
  BridgeSegment seg;
  seg.dt = dt;
  seg.start = a;
  seg.end = b;
  seg.times.resize(n + 1);
  for (int i = 0; i <= n; ++i) seg.times(i) = i * dt;
  seg.states.reserve(n + 1);
  seg.drifts.reserve(n);
  (void)samples;
  return seg;
}

}  // namespace

int ControlProblem::steps() const { return step_count(horizon, dt); }

void ControlProblem::validate() const {
  validate_endpoints(start, end, sigma);
  (void)steps();
  if (!prior_drift) throw InvalidParameter("bridge: prior drift is required");
  if (!(beta >= 0.0)) throw InvalidParameter("bridge: beta must be nonnegative");
  if (beta > 0.0 && !guide) throw InvalidParameter("bridge: beta > 0 needs a guide");
  if (steps() < 2) throw InvalidParameter("bridge: need at least two control steps");
  if (backward_substeps < 1) throw InvalidParameter("bridge: backward_substeps must be >= 1");
  if (particles < std::max(10, score.inducing))
    throw InvalidParameter("bridge: too few particles for the score estimator");
}

namespace {

// Regularized resampling: under deterministic dynamics duplicated particles
// would never separate again, so they are spread by a Gaussian kernel with the
// ensemble covariance scaled by Silverman's factor.
void regularize(Points& X, Rng& rng) {
  const Eigen::Index N = X.rows();
  const Eigen::Index d = X.cols();
  const Vector mean = X.colwise().mean();
  const Points C = X.rowwise() - mean.transpose();
  const Matrix cov = C.transpose() * C / static_cast<double>(N);
  const double h = std::pow(4.0 / (static_cast<double>(N) * (d + 2)), 1.0 / (d + 4));
  Eigen::LLT<Matrix> llt(cov + 1e-12 * Matrix::Identity(d, d));
  if (llt.info() != Eigen::Success) return;
  const Matrix L = llt.matrixL();
  X += h * rng.normal_matrix(N, d) * L.transpose();
}

}  // namespace

Flow forward_flow(const ControlProblem& prob, std::uint64_t seed) {
  prob.validate();
  const int n = prob.steps();
  const Eigen::Index N = prob.particles;
  const Eigen::Index d = prob.start.size();
  const Vector D = prob.sigma.cwiseAbs2();
  const bool deterministic = prob.dynamics == FlowDynamics::deterministic;
  Rng rng(seed, {1});

  Flow flow;
  flow.reserve(n + 1);
  Points X = prob.start.transpose().replicate(N, 1);
  Vector logw = Vector::Zero(N);
  flow.push_back({0.0, X, Vector::Constant(N, 1.0 / N), {}});

  for (int i = 0; i < n; ++i) {
    const Points f = prob.prior_drift(X);
    if (deterministic && i > 0) {
      // Probability-flow velocity f - (D/2) grad log rho.
      X += (f - 0.5 * flow.back().score(X) * D.asDiagonal()) * prob.dt;
    } else {
      // The point mass at t = 0 has no score; the first step is stochastic.
      X += f * prob.dt + diffusion_noise(rng, N, prob.sigma, prob.dt);
    }
    check_finite(X, i + 1, "forward flow");
    const double t = (i + 1) * prob.dt;
    if (prob.beta > 0.0) {
      const Vector g = prob.guide(t);
      if (g.size() != d) throw InvalidParameter("bridge: guide dimension mismatch");
      logw -= prob.beta * prob.dt * (X.rowwise() - g.transpose()).rowwise().squaredNorm();
    }
    Vector w = (logw.array() - logw.maxCoeff()).exp();
    const double ess = effective_sample_size(w);
    if (ess < kMinEss)
      throw DegeneracyError(ess, "forward flow: effective sample size " +
                                     std::to_string(ess) + " at step " +
                                     std::to_string(i + 1));
    if (ess < 0.5 * static_cast<double>(N)) {
      const auto idx = systematic_resample(w, rng);
      Points Y(N, d);
      for (Eigen::Index j = 0; j < N; ++j) Y.row(j) = X.row(idx[j]);
      X = std::move(Y);
      if (deterministic) regularize(X, rng);
      logw.setZero();
      w.setOnes();
    }
    w /= w.sum();
    flow.push_back({t, X, w,
                    fit_slice(X, w, prob.score,
                              derive_seed(seed, {2, static_cast<std::uint64_t>(i + 1)}))});
  }
  return flow;
}

Flow backward_flow(const Flow& forward, const ControlProblem& prob,
                   std::uint64_t seed) {
  prob.validate();
  const int n = prob.steps();
  if (static_cast<int>(forward.size()) != n + 1)
    throw InvalidParameter("backward flow: forward flow has the wrong length");
  std::vector<Control::Slice> rho;
  for (int i = 1; i <= n; ++i) {
    if (!forward[i].score)
      throw InvalidParameter("backward flow: forward slice lacks a score");
    rho.push_back({forward[i].time, forward[i].score});
  }
  const Eigen::Index N = prob.particles;
  const Vector D = prob.sigma.cwiseAbs2();
  const bool deterministic = prob.dynamics == FlowDynamics::deterministic;
  const int sub = deterministic ? prob.backward_substeps : 1;
  const double h = prob.dt / sub;
  Rng rng(seed, {3});

  Flow flow;
  flow.reserve(n);
  Points Y = prob.end.transpose().replicate(N, 1) +
             diffusion_noise(rng, N, prob.sigma, prob.dt);
  const Vector w = Vector::Constant(N, 1.0 / N);
  std::uint64_t fits = 0;
  auto fit = [&]() {
    return fit_slice(Y, w, prob.score, derive_seed(seed, {4, fits++}));
  };
  // The jittered terminal cloud has a known law, N(end, sigma^2 dt).
  Vector prec = Vector::Zero(D.size());
  for (Eigen::Index c = 0; c < D.size(); ++c)
    if (D(c) > 0.0) prec(c) = 1.0 / (D(c) * prob.dt);
  const Vector end = prob.end;
  score::ScoreFunction sq = [prec, end](const Points& P) -> Points {
    return -((P.rowwise() - end.transpose()) * prec.asDiagonal());
  };
  flow.push_back({prob.horizon - prob.dt, Y, w, sq});

  // Reversed time runs from horizon - dt down to dt; the slice at time 0 is
  // the point mass at `start` and is not simulated.
  for (int j = 0; j + 2 < n; ++j) {
    const double t = prob.horizon - (j + 1) * prob.dt;
    if (deterministic) {
      // Reversed probability flow: -f + D grad log rho - (D/2) grad log q.
      for (int m = 0; m < sub; ++m) {
        if (m > 0) sq = fit();
        const Points v = Control::interpolate(rho, Y, t - m * h) * D.asDiagonal() -
                         prob.prior_drift(Y) - 0.5 * sq(Y) * D.asDiagonal();
        Y += v * h;
      }
    } else {
      auto drift = [&](const Points& P, double at) -> Points {
        return Control::interpolate(rho, P, at) * D.asDiagonal() - prob.prior_drift(P);
      };
      const Points noise = diffusion_noise(rng, N, prob.sigma, prob.dt);
      const Points b0 = drift(Y, t);
      const Points pred = Y + b0 * prob.dt + noise;
      Y += 0.5 * (b0 + drift(pred, t - prob.dt)) * prob.dt + noise;
    }
    check_finite(Y, j + 1, "backward flow");
    sq = fit();
    flow.push_back({t - prob.dt, Y, w, sq});
  }
  return flow;
}

Control::Control(std::vector<Slice> forward, std::vector<Slice> backward,
                 Vector sigma, double horizon)
    : fwd_(std::move(forward)), bwd_(std::move(backward)),
      diffusion_(sigma.cwiseAbs2()), horizon_(horizon) {
  auto by_time = [](const Slice& a, const Slice& b) { return a.time < b.time; };
  std::sort(fwd_.begin(), fwd_.end(), by_time);
  std::sort(bwd_.begin(), bwd_.end(), by_time);
  if (fwd_.empty() || bwd_.empty())
    throw InvalidParameter("control: both flows need at least one scored slice");
}

Points Control::interpolate(const std::vector<Slice>& slices, const Points& X,
                            double t) {
  if (t <= slices.front().time) return slices.front().score(X);
  if (t >= slices.back().time) return slices.back().score(X);
  auto hi = std::upper_bound(slices.begin(), slices.end(), t,
                             [](double v, const Slice& s) { return v < s.time; });
  auto lo = hi - 1;
  const double span = hi->time - lo->time;
  const double lam = span > 0.0 ? (t - lo->time) / span : 0.0;
  if (lam < 1e-9) return lo->score(X);
  if (lam > 1.0 - 1e-9) return hi->score(X);
  return (1.0 - lam) * lo->score(X) + lam * hi->score(X);
}

Points Control::operator()(const Points& X, double t) const {
  const double slack = 1e-9 * std::max(1.0, horizon_);
  if (!(t >= -slack && t <= horizon_ + slack))
    throw DomainError("control: time " + std::to_string(t) + " outside [0, " +
                      std::to_string(horizon_) + "]");
  if (X.cols() != diffusion_.size())
    throw InvalidParameter("control: state dimension mismatch");
  return (interpolate(bwd_, X, t) - interpolate(fwd_, X, t)) * diffusion_.asDiagonal();
}

Control optimal_control(const Flow& forward, const Flow& backward,
                        const Vector& sigma) {
  if (forward.empty()) throw InvalidParameter("control: empty forward flow");
  std::vector<Control::Slice> f, b;
  for (const auto& s : forward)
    if (s.score) f.push_back({s.time, s.score});
  for (const auto& s : backward)
    if (s.score) b.push_back({s.time, s.score});
  return Control(std::move(f), std::move(b), sigma, forward.back().time);
}

gp::WeightedStateData BridgeSegment::as_weighted_data() const {
  const Eigen::Index S = samples();
  const Eigen::Index n = steps();
  const Eigen::Index d = dim();
  gp::WeightedStateData out;
  out.points.resize(n * S, d);
  out.responses.resize(n * S, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.points.middleRows(i * S, S) = states[i];
    out.responses.middleRows(i * S, S) = drifts[i];
  }
  out.weights = Vector::Constant(n * S, dt / static_cast<double>(S));
  return out;
}

BridgeSegment sample_bridge(const ControlProblem& prob, const Control& control,
                            int n_samples, std::uint64_t seed,
                            const SampleOptions& opt) {
  prob.validate();
  if (n_samples < 1) throw InvalidParameter("bridge: need at least one sample");
  const int n = prob.steps();
  Rng rng(seed, {5});
  BridgeSegment seg = empty_segment(prob.start, prob.end, n, prob.dt, n_samples);
  Points X = prob.start.transpose().replicate(n_samples, 1);
  double cost = 0.0;
  for (int i = 0; i < n; ++i) {
    const Points f = prob.prior_drift(X);
    const Points u = control(X, i * prob.dt);
    Points g = f + u;
    for (Eigen::Index j = 0; j < X.rows(); ++j)
      cost += 0.5 * sigma_weighted_sq(u.row(j), prob.sigma) * prob.dt;
    seg.states.push_back(X);
    X += g * prob.dt;
    if (i + 1 < n) X += diffusion_noise(rng, n_samples, prob.sigma, prob.dt);
    seg.drifts.push_back(std::move(g));
    check_finite(X, i + 1, "bridge");
  }
  seg.states.push_back(X);
  seg.control_cost = cost / n_samples;
  finish_segment(seg, opt);
  return seg;
}

BridgeSegment controlled_bridge(const ControlProblem& prob, int n_samples,
                                std::uint64_t seed, const SampleOptions& opt) {
  const Flow fwd = forward_flow(prob, derive_seed(seed, {10}));
  const Flow bwd = backward_flow(fwd, prob, derive_seed(seed, {11}));
  const Control u = optimal_control(fwd, bwd, prob.sigma);
  return sample_bridge(prob, u, n_samples, derive_seed(seed, {12}), opt);
}

BridgeSegment brownian_bridge_baseline(const Vector& a, const Vector& b,
                                       const Vector& sigma, double tau,
                                       double dt, int n_samples,
                                       std::uint64_t seed,
                                       const SampleOptions& opt) {
  validate_endpoints(a, b, sigma);
  if (n_samples < 1) throw InvalidParameter("bridge: need at least one sample");
  const int n = step_count(tau, dt);
  Rng rng(seed, {6});
  BridgeSegment seg = empty_segment(a, b, n, dt, n_samples);
  Points X = a.transpose().replicate(n_samples, 1);
  double cost = 0.0;
  for (int i = 0; i < n; ++i) {
    const double remaining = tau - i * dt;
    Points g = (-X).rowwise() + b.transpose();
    g /= remaining;
    for (Eigen::Index j = 0; j < X.rows(); ++j)
      cost += 0.5 * sigma_weighted_sq(g.row(j), sigma) * dt;
    seg.states.push_back(X);
    X += g * dt;
    if (i + 1 < n) X += diffusion_noise(rng, n_samples, sigma, dt);
    seg.drifts.push_back(std::move(g));
  }
  seg.states.push_back(X);
  seg.control_cost = cost / n_samples;
  finish_segment(seg, opt);
  return seg;
}

LinearSde linearize(const VectorField& f, const Vector& x0, const Vector& sigma) {
  const Eigen::Index d = x0.size();
  if (sigma.size() != d) throw InvalidParameter("linearize: dimension mismatch");
  // Central differences, all 2d probes in one batch.
  Points probes(2 * d, d);
  Vector h(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    h(c) = 1e-5 * std::max(1.0, std::abs(x0(c)));
    probes.row(2 * c) = x0.transpose();
    probes.row(2 * c + 1) = x0.transpose();
    probes(2 * c, c) += h(c);
    probes(2 * c + 1, c) -= h(c);
  }
  const Points fp = f(probes);
  LinearSde out;
  out.A.resize(d, d);
  for (Eigen::Index c = 0; c < d; ++c)
    out.A.col(c) = (fp.row(2 * c) - fp.row(2 * c + 1)).transpose() / (2.0 * h(c));
  out.c = evaluate_at(f, x0) - out.A * x0;
  out.sigma = sigma;
  if (!out.A.allFinite() || !out.c.allFinite())
    throw DomainError("linearize: drift is not finite near the linearization point");
  return out;
}

namespace {

// Transition of the linear SDE over a duration s:
//   X_s = F X_0 + h + N(0, Q).
struct Transition {
  Matrix F;
  Vector h;
  Matrix Q;
};

Transition transition(const LinearSde& sde, double s) {
  const Eigen::Index d = sde.A.rows();
  Transition tr;
  if (s <= 0.0) {
    tr.F = Matrix::Identity(d, d);
    tr.h = Vector::Zero(d);
    tr.Q = Matrix::Zero(d, d);
    return tr;
  }
  Matrix aug = Matrix::Zero(d + 1, d + 1);
  aug.topLeftCorner(d, d) = sde.A * s;
  aug.topRightCorner(d, 1) = sde.c * s;
  const Matrix E = aug.exp();
  tr.F = E.topLeftCorner(d, d);
  tr.h = E.topRightCorner(d, 1);
  // Van Loan: exp([[-A, D], [0, A^T]] s) = [[., F^{-1} Q], [0, F^T]].
  Matrix vl = Matrix::Zero(2 * d, 2 * d);
  vl.topLeftCorner(d, d) = -sde.A * s;
  vl.topRightCorner(d, d) = sde.sigma.cwiseAbs2().asDiagonal();
  vl.topRightCorner(d, d) *= s;
  vl.bottomRightCorner(d, d) = sde.A.transpose() * s;
  const Matrix V = vl.exp();
  tr.Q = V.bottomRightCorner(d, d).transpose() * V.topRightCorner(d, d);
  tr.Q = 0.5 * (tr.Q + tr.Q.transpose()).eval();
  return tr;
}

void validate_linear(const LinearSde& sde, const Vector& a, const Vector& b) {
  const Eigen::Index d = a.size();
  validate_endpoints(a, b, sde.sigma);
  if (sde.A.rows() != d || sde.A.cols() != d || sde.c.size() != d)
    throw InvalidParameter("linear bridge: dimension mismatch");
}

}  // namespace

GaussianMarginal linear_bridge_marginal(const LinearSde& sde, const Vector& a,
                                        const Vector& b, double tau, double t) {
  validate_linear(sde, a, b);
  if (!(tau > 0.0) || t < 0.0 || t > tau)
    throw DomainError("linear bridge: need 0 <= t <= tau");
  const Transition to_t = transition(sde, t);
  const Transition rest = transition(sde, tau - t);
  const Transition full = transition(sde, tau);
  const Vector mu_t = to_t.F * a + to_t.h;
  const Vector mu_tau = full.F * a + full.h;
  const auto f = detail::factorize_spd(full.Q, full.Q.diagonal().mean(), "linear bridge");
  const Matrix cross = to_t.Q * rest.F.transpose();
  GaussianMarginal out;
  out.mean = mu_t + cross * f.llt.solve(b - mu_tau);
  out.cov = to_t.Q - cross * f.llt.solve(cross.transpose());
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

BridgeSegment linear_bridge_sample(const LinearSde& sde, const Vector& a,
                                   const Vector& b, double tau, double dt,
                                   int n_samples, std::uint64_t seed,
                                   const SampleOptions& opt) {
  validate_linear(sde, a, b);
  if (n_samples < 1) throw InvalidParameter("bridge: need at least one sample");
  if ((sde.sigma.array() <= 0.0).any())
    throw InvalidParameter("linear bridge: sigma must be positive");
  const int n = step_count(tau, dt);
  const Eigen::Index d = a.size();
  const Vector D = sde.sigma.cwiseAbs2();
  Rng rng(seed, {7});
  BridgeSegment seg = empty_segment(a, b, n, dt, n_samples);

  const Transition step = transition(sde, dt);
  Points X = a.transpose().replicate(n_samples, 1);
  double cost = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = tau - i * dt;  // time to go at the current state
    const Transition to_end = transition(sde, s);
    const Transition after = transition(sde, s - dt);
    const auto fq = detail::factorize_spd(to_end.Q, to_end.Q.diagonal().mean(),
                                          "linear bridge");

    // Effective drift A x + c + D F_s^T Q_s^{-1} (b - F_s x - h_s).
    const Matrix resid = ((-(X * to_end.F.transpose())).rowwise() +
                          (b - to_end.h).transpose());
    const Matrix guide = fq.llt.solve(resid.transpose()).transpose() * to_end.F;
    Points g = (X * sde.A.transpose()).rowwise() + sde.c.transpose();
    const Points u = guide * D.asDiagonal();
    g += u;
    for (Eigen::Index j = 0; j < X.rows(); ++j)
      cost += 0.5 * sigma_weighted_sq(u.row(j), sde.sigma) * dt;
    seg.states.push_back(X);
    seg.drifts.push_back(std::move(g));

    // Conditional law of the next state given the current one and X_tau = b.
    const Points m = (X * step.F.transpose()).rowwise() + step.h.transpose();
    if (i + 1 == n) {
      X = b.transpose().replicate(n_samples, 1);
      continue;
    }
    const Matrix cross = step.Q * after.F.transpose();  // Cov(x_next, x_tau)
    const Matrix gain = fq.llt.solve(cross.transpose()).transpose();
    Matrix cov = step.Q - gain * cross.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    const Matrix pred = ((-(m * after.F.transpose())).rowwise() +
                         (b - after.h).transpose());
    const Points mean = m + pred * gain.transpose();
    const auto fc = detail::factorize_spd(cov, cov.diagonal().mean(), "linear bridge");
    const Matrix L = fc.llt.matrixL();
    X = mean + rng.normal_matrix(n_samples, d) * L.transpose();
    check_finite(X, i + 1, "linear bridge");
  }
  seg.states.push_back(X);
  seg.control_cost = cost / n_samples;
  finish_segment(seg, opt);
  return seg;
}

BridgeSegment ou_bridge_baseline(const VectorField& f,
                                 const Vector& linearization_point,
                                 const Vector& a, const Vector& b,
                                 const Vector& sigma, double tau, double dt,
                                 int n_samples, std::uint64_t seed,
                                 const SampleOptions& opt) {
  const LinearSde lin = linearize(f, linearization_point, sigma);
  return linear_bridge_sample(lin, a, b, tau, dt, n_samples, seed, opt);
}

}  // namespace geopath::bridge
