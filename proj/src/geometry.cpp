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

#include "geopath/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "geopath/errors.hpp"
#include "lbfgs.hpp"

namespace geopath::geometry {

MetricField::MetricField(Points support, double sigma_m, double epsilon)
    : support_(std::move(support)),
      sigma_m_(sigma_m),
      epsilon_(epsilon),
      dim_(static_cast<int>(support_.cols())) {
  if (support_.rows() < 1) throw InvalidParameter("metric: need a support point");
  if (!(sigma_m_ > 0.0)) throw InvalidParameter("metric: sigma_m must be > 0");
  if (!(epsilon_ > 0.0)) throw InvalidParameter("metric: epsilon must be > 0");
}

MetricField MetricField::identity(int dim, double scale) {
  MetricField m;
  m.dim_ = dim;
  m.flat_ = true;
  m.scale_ = scale;
  return m;
}

MetricField MetricField::scaled(double c) const {
  if (!(c > 0.0)) throw InvalidParameter("metric: scale must be > 0");
  MetricField m = *this;
  m.scale_ *= c;
  return m;
}

Vector MetricField::diagonal(const Vector& x) const {
  if (flat_) return Vector::Constant(dim_, scale_);
  Vector spread = Vector::Zero(dim_);
  const double inv = 1.0 / (2.0 * sigma_m_ * sigma_m_);
  for (Eigen::Index i = 0; i < support_.rows(); ++i) {
    const Vector diff = support_.row(i).transpose() - x;
    const double w = std::exp(-diff.squaredNorm() * inv);
    spread += w * diff.cwiseAbs2();
  }
  return scale_ * (spread.array() + epsilon_).inverse().matrix();
}

void MetricField::diagonal_and_jacobian(const Vector& x, Vector& h,
                                        Matrix& jac) const {
  if (flat_) {
    h = Vector::Constant(dim_, scale_);
    jac = Matrix::Zero(dim_, dim_);
    return;
  }
  const double s2 = sigma_m_ * sigma_m_;
  Vector spread = Vector::Zero(dim_);
  Matrix dspread = Matrix::Zero(dim_, dim_);  // d S_d / d x_e
  for (Eigen::Index i = 0; i < support_.rows(); ++i) {
    const Vector diff = support_.row(i).transpose() - x;
    const double w = std::exp(-diff.squaredNorm() / (2.0 * s2));
    if (w == 0.0) continue;
    const Vector sq = diff.cwiseAbs2();
    spread += w * sq;
    // dw/dx_e = w (x_i,e - x_e) / s^2 ; d(diff_d^2)/dx_e = -2 diff_d delta_de
    dspread.noalias() += (w / s2) * sq * diff.transpose();
    dspread.diagonal() -= 2.0 * w * diff;
  }
  const Vector denom = spread.array() + epsilon_;
  h = scale_ * denom.cwiseInverse();
  jac.resize(dim_, dim_);
  for (int d = 0; d < dim_; ++d)
    jac.row(d) = -scale_ / (denom(d) * denom(d)) * dspread.row(d);
}

double median_nn_distance(const Points& pts) {
  const Eigen::Index n = pts.rows();
  if (n < 2) throw InvalidParameter("median nn distance: need >= 2 points");
  std::vector<double> nn(n, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) nn[i] = std::min(nn[i], (pts.row(i) - pts.row(j)).norm());
  std::nth_element(nn.begin(), nn.begin() + n / 2, nn.end());
  double med = nn[n / 2];
  if (n % 2 == 0) {
    const double lo = *std::max_element(nn.begin(), nn.begin() + n / 2);
    med = 0.5 * (med + lo);
  }
  return med;
}

double curve_energy(const Points& nodes, const MetricField& metric) {
  const Eigen::Index n = nodes.rows();
  if (n < 2) return 0.0;
  const double h = 1.0 / static_cast<double>(n - 1);
  double e = 0.0;
  for (Eigen::Index s = 0; s + 1 < n; ++s) {
    const Vector delta = (nodes.row(s + 1) - nodes.row(s)).transpose();
    const Vector mid = 0.5 * (nodes.row(s + 1) + nodes.row(s)).transpose();
    e += metric.diagonal(mid).dot(delta.cwiseAbs2());
  }
  return 0.5 * e / h;
}

double curve_energy(const GeodesicCurve& curve, const MetricField& metric) {
  return curve_energy(curve.nodes, metric);
}

double curve_length(const Points& nodes, const MetricField& metric) {
  double len = 0.0;
  for (Eigen::Index s = 0; s + 1 < nodes.rows(); ++s) {
    const Vector delta = (nodes.row(s + 1) - nodes.row(s)).transpose();
    const Vector mid = 0.5 * (nodes.row(s + 1) + nodes.row(s)).transpose();
    len += std::sqrt(metric.diagonal(mid).dot(delta.cwiseAbs2()));
  }
  return len;
}

namespace {

Points chord(const Vector& a, const Vector& b, int n) {
  Points p(n, a.size());
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    p.row(i) = ((1.0 - t) * a + t * b).transpose();
  }
  return p;
}

// Resamples a polyline to n nodes equally spaced in Euclidean arc length.
Points resample_polyline(const Points& poly, int n) {
  const Eigen::Index m = poly.rows();
  Vector cum(m);
  cum(0) = 0.0;
  for (Eigen::Index i = 1; i < m; ++i)
    cum(i) = cum(i - 1) + (poly.row(i) - poly.row(i - 1)).norm();
  Points out(n, poly.cols());
  out.row(0) = poly.row(0);
  out.row(n - 1) = poly.row(m - 1);
  const double total = cum(m - 1);
  Eigen::Index seg = 0;
  for (int i = 1; i < n - 1; ++i) {
    const double target = total * i / (n - 1);
    while (seg + 1 < m - 1 && cum(seg + 1) < target) ++seg;
    const double len = cum(seg + 1) - cum(seg);
    const double f = len > 0.0 ? (target - cum(seg)) / len : 0.0;
    out.row(i) = (1.0 - f) * poly.row(seg) + f * poly.row(seg + 1);
  }
  return out;
}

// Shortest metric-length path a -> b through the support on a symmetric
// k-NN graph. Empty when a and b are disconnected.
std::optional<Points> graph_path(const MetricField& metric, const Vector& a,
                                 const Vector& b, int k) {
  const Points& sup = metric.support();
  const Eigen::Index n = sup.rows() + 2;
  Points nodes(n, a.size());
  nodes.row(0) = a.transpose();
  nodes.row(1) = b.transpose();
  nodes.bottomRows(sup.rows()) = sup;
  const int kk = static_cast<int>(std::min<Eigen::Index>(k, n - 1));

  std::vector<std::vector<std::pair<Eigen::Index, double>>> adj(n);
  std::vector<std::pair<double, Eigen::Index>> dist(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      dist[j] = {i == j ? std::numeric_limits<double>::infinity()
                        : (nodes.row(i) - nodes.row(j)).squaredNorm(),
                 j};
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    for (int q = 0; q < kk; ++q) {
      const Eigen::Index j = dist[q].second;
      const Vector delta = (nodes.row(j) - nodes.row(i)).transpose();
      const Vector mid = 0.5 * (nodes.row(j) + nodes.row(i)).transpose();
      const double w = std::sqrt(metric.diagonal(mid).dot(delta.cwiseAbs2()));
      adj[i].push_back({j, w});
      adj[j].push_back({i, w});
    }
  }

  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<Eigen::Index> prev(n, -1);
  using Item = std::pair<double, Eigen::Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  best[0] = 0.0;
  pq.push({0.0, 0});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > best[u]) continue;
    if (u == 1) break;
    for (auto [v, w] : adj[u]) {
      if (best[u] + w < best[v]) {
        best[v] = best[u] + w;
        prev[v] = u;
        pq.push({best[v], v});
      }
    }
  }
  if (!std::isfinite(best[1])) return std::nullopt;
  std::vector<Eigen::Index> path;
  for (Eigen::Index v = 1; v != -1; v = prev[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  Points poly(path.size(), a.size());
  for (std::size_t i = 0; i < path.size(); ++i) poly.row(i) = nodes.row(path[i]);
  return poly;
}

// Energy and gradient with respect to the interior nodes (row-major packed).
double energy_and_gradient(const MetricField& metric, const Vector& a,
                           const Vector& b, const Vector& packed, Vector& grad) {
  const Eigen::Index d = a.size();
  const Eigen::Index inner = packed.size() / d;
  const Eigen::Index n = inner + 2;
  const double h = 1.0 / static_cast<double>(n - 1);
  auto node = [&](Eigen::Index i) -> Vector {
    if (i == 0) return a;
    if (i == n - 1) return b;
    return packed.segment((i - 1) * d, d);
  };
  grad.setZero(packed.size());
  double e = 0.0;
  Vector hd;
  Matrix jac;
  for (Eigen::Index s = 0; s + 1 < n; ++s) {
    const Vector x0 = node(s), x1 = node(s + 1);
    const Vector delta = x1 - x0;
    metric.diagonal_and_jacobian(0.5 * (x0 + x1), hd, jac);
    const Vector sq = delta.cwiseAbs2();
    e += hd.dot(sq);
    // d/dx of sum_d H_d(mid) delta_d^2 through the midpoint (factor 1/2).
    const Vector via_mid = 0.5 * (jac.transpose() * sq);
    const Vector via_delta = 2.0 * hd.cwiseProduct(delta);
    if (s + 1 < n - 1) grad.segment(s * d, d) += via_delta + via_mid;
    if (s > 0) grad.segment((s - 1) * d, d) += -via_delta + via_mid;
  }
  grad *= 0.5 / h;
  return 0.5 * e / h;
}

}  // namespace

GeodesicCurve solve_geodesic(const MetricField& metric, const Vector& a,
                             const Vector& b, int n_nodes,
                             const std::optional<Points>& init,
                             const GeodesicOptions& opt) {
  if (n_nodes < 3) throw InvalidParameter("geodesic: n_nodes must be >= 3");
  if (a.size() != metric.dim() || b.size() != metric.dim())
    throw InvalidParameter("geodesic: endpoint dimension mismatch");
  GeodesicCurve curve;
  if ((a - b).norm() == 0.0) {
    curve.nodes = chord(a, b, n_nodes);
    curve.energy = 0.0;
    return curve;
  }

  auto minimize_from = [&](Points start) {
    start.row(0) = a.transpose();
    start.row(n_nodes - 1) = b.transpose();
    const Eigen::Index d = a.size();
    Vector packed((n_nodes - 2) * d);
    for (int i = 1; i < n_nodes - 1; ++i)
      packed.segment((i - 1) * d, d) = start.row(i).transpose();
    auto objective = [&](const Vector& x, Vector& g) {
      return energy_and_gradient(metric, a, b, x, g);
    };
    auto tolerance = [&](double e) {
      return std::max(opt.relative_tolerance * e / n_nodes, 1e-13);
    };
    detail::LbfgsOptions lo;
    lo.max_iterations = opt.max_iterations;
    const auto res = detail::lbfgs_minimize(objective, packed, tolerance, lo);
    GeodesicCurve c;
    c.nodes = std::move(start);
    for (int i = 1; i < n_nodes - 1; ++i)
      c.nodes.row(i) = res.x.segment((i - 1) * d, d).transpose();
    c.energy = res.value;
    c.converged = res.converged;
    c.iterations = res.iterations;
    c.gradient_norm = res.gradient_norm;
    return c;
  };

  if (init) {
    if (init->rows() != n_nodes || init->cols() != a.size())
      throw InvalidParameter("geodesic: initialization has wrong shape");
    return minimize_from(*init);
  }
  Points line = chord(a, b, n_nodes);
  if (metric.is_flat()) return minimize_from(std::move(line));
  auto poly = graph_path(metric, a, b, opt.graph_neighbours);
  if (!poly) return minimize_from(std::move(line));
  Points g = resample_polyline(*poly, n_nodes);
  const double e_line = curve_energy(line, metric), e_graph = curve_energy(g, metric);
  if (e_line > opt.graph_switch_ratio * e_graph) {
    curve = minimize_from(std::move(g));
    curve.graph_initialized = true;
    return curve;
  }
  curve = minimize_from(std::move(line));
  // The chord can sit on a plateau of the metric (e.g. across the hole of a
  // cycle) where descent stalls; a cheaper graph start gets its own solve.
  if (e_graph < e_line) {
    GeodesicCurve alt = minimize_from(std::move(g));
    if (alt.energy < curve.energy) {
      alt.graph_initialized = true;
      curve = std::move(alt);
    }
  }
  return curve;
}

double phase_of(const Vector& x) {
  if (x.size() != 2) throw InvalidParameter("phase: state must be 2-D");
  if (x(0) == 0.0 && x(1) == 0.0) throw UndefinedPhase("phase: undefined at origin");
  const double p = (std::atan2(x(1), x(0)) + std::numbers::pi) / (2.0 * std::numbers::pi);
  return p >= 1.0 ? 0.0 : p;
}

std::optional<Direction> estimate_direction(const Points& obs) {
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index k = 0; k + 1 < obs.rows(); ++k) {
    try {
      double dphi = phase_of(obs.row(k + 1).transpose()) -
                    phase_of(obs.row(k).transpose());
      dphi -= std::round(dphi);  // wrap into [-1/2, 1/2]
      sum += dphi;
      ++count;
    } catch (const UndefinedPhase&) {
    }
  }
  if (count == 0 || sum == 0.0) return std::nullopt;
  return sum > 0.0 ? Direction::ccw : Direction::cw;
}

namespace {
bool on_ccw_arc(double phi, double from, double to) {
  if (from <= to) return phi >= from && phi <= to;
  return phi >= from || phi <= to;
}
}  // namespace

PhaseFilterResult filter_support_by_phase(const Points& obs, double phi_k,
                                          double phi_k1, Direction direction) {
  const double from = direction == Direction::ccw ? phi_k : phi_k1;
  const double to = direction == Direction::ccw ? phi_k1 : phi_k;
  std::vector<Eigen::Index> keep;
  int strictly_inside = 0;
  for (Eigen::Index i = 0; i < obs.rows(); ++i) {
    double phi;
    try {
      phi = phase_of(obs.row(i).transpose());
    } catch (const UndefinedPhase&) {
      continue;
    }
    if (!on_ccw_arc(phi, from, to)) continue;
    keep.push_back(i);
    if (phi != phi_k && phi != phi_k1) ++strictly_inside;
  }
  PhaseFilterResult out;
  if (strictly_inside == 0) {
    out.support = obs;
    out.fallback = true;
    return out;
  }
  out.support.resize(keep.size(), obs.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.support.row(i) = obs.row(keep[i]);
  return out;
}

GeodesicSchedule::GeodesicSchedule(std::vector<IntervalGeodesic> intervals,
                                   double t0, double tau, double sigma_m,
                                   double epsilon)
    : intervals_(std::move(intervals)),
      t0_(t0),
      tau_(tau),
      sigma_m_(sigma_m),
      epsilon_(epsilon) {
  if (!(tau_ > 0.0)) throw InvalidParameter("schedule: tau must be > 0");
  for (const auto& iv : intervals_) {
    const Points& p = iv.curve.nodes;
    Vector cum(p.rows());
    cum(0) = 0.0;
    for (Eigen::Index i = 1; i < p.rows(); ++i)
      cum(i) = cum(i - 1) + (p.row(i) - p.row(i - 1)).norm();
    if (cum(p.rows() - 1) > 0.0) cum /= cum(p.rows() - 1);
    else cum = Vector::LinSpaced(p.rows(), 0.0, 1.0);
    arclength_.push_back(std::move(cum));
  }
}

Vector GeodesicSchedule::at_local(std::size_t k, double s) const {
  if (k >= intervals_.size()) throw DomainError("schedule: interval out of range");
  const Points& p = intervals_[k].curve.nodes;
  const Vector& cum = arclength_[k];
  const double u = std::clamp(s / tau_, 0.0, 1.0);
  if (u <= 0.0) return p.row(0).transpose();
  if (u >= 1.0) return p.row(p.rows() - 1).transpose();
  const auto it = std::upper_bound(cum.data(), cum.data() + cum.size(), u);
  Eigen::Index hi = std::min<Eigen::Index>(it - cum.data(), cum.size() - 1);
  Eigen::Index lo = hi - 1;
  while (lo > 0 && cum(lo) == cum(hi)) --lo;
  const double span = cum(hi) - cum(lo);
  const double f = span > 0.0 ? (u - cum(lo)) / span : 0.0;
  return ((1.0 - f) * p.row(lo) + f * p.row(hi)).transpose();
}

Vector GeodesicSchedule::at(double t) const {
  const double rel = (t - t0_) / tau_;
  const double span = static_cast<double>(intervals_.size());
  if (rel < -1e-12 || rel > span + 1e-12)
    throw DomainError("schedule: time outside the observation window");
  auto k = static_cast<std::size_t>(std::clamp(std::floor(rel), 0.0, span - 1.0));
  return at_local(k, (rel - static_cast<double>(k)) * tau_);
}

std::function<Vector(double)> GeodesicSchedule::guide(std::size_t k) const {
  auto self = std::make_shared<const GeodesicSchedule>(*this);
  return [self, k](double s) { return self->at_local(k, s); };
}

GeodesicSchedule build_geodesic_schedule(const sde::ObservationSet& obs,
                                         const MetricParams& params,
                                         std::optional<Direction> direction) {
  obs.validate();
  const Points& O = obs.states;
  const double sigma_m = params.sigma_m ? *params.sigma_m : median_nn_distance(O);
  const auto n_int = static_cast<Eigen::Index>(O.rows() - 1);
  if (direction && obs.dim() != 2)
    throw InvalidParameter("schedule: phase filtering needs 2-D states");

  std::vector<IntervalGeodesic> out(n_int);
  std::vector<Points> supports(n_int);
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index k = 0; k < n_int; ++k) {
    const Vector a = O.row(k).transpose(), b = O.row(k + 1).transpose();
    Points support = O;
    bool fallback = false;
    if (direction) {
      try {
        auto filt = filter_support_by_phase(O, phase_of(a), phase_of(b), *direction);
        support = std::move(filt.support);
        fallback = filt.fallback;
      } catch (const UndefinedPhase&) {
        fallback = true;
      }
    }
    const MetricField metric(support, sigma_m, params.epsilon);
    out[k].curve = solve_geodesic(metric, a, b, params.n_nodes, std::nullopt,
                                  params.solver);
    out[k].phase_fallback = fallback;
    supports[k] = std::move(support);
  }

  // Warm-start pass: an interval whose endpoints sit close to the previous
  // interval's also tries the previous solution, shifted onto its endpoints.
  std::vector<IntervalGeodesic> first = out;
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index k = 1; k < n_int; ++k) {
    const Vector a = O.row(k).transpose(), b = O.row(k + 1).transpose();
    const Vector pa = O.row(k - 1).transpose(), pb = O.row(k).transpose();
    if ((a - pa).norm() + (b - pb).norm() >= sigma_m) continue;
    const Points& prev = first[k - 1].curve.nodes;
    Points init(prev.rows(), prev.cols());
    for (Eigen::Index i = 0; i < prev.rows(); ++i) {
      const double t = static_cast<double>(i) / (prev.rows() - 1);
      init.row(i) = prev.row(i) + ((1.0 - t) * (a - pa) + t * (b - pb)).transpose();
    }
    const MetricField metric(supports[k], sigma_m, params.epsilon);
    auto warm = solve_geodesic(metric, a, b, params.n_nodes, init, params.solver);
    if (warm.energy < out[k].curve.energy) {
      out[k].curve = std::move(warm);
      out[k].warm_started = true;
    }
  }
  return GeodesicSchedule(std::move(out), obs.times(0), obs.tau(), sigma_m,
                          params.epsilon);
}

}  // namespace geopath::geometry
