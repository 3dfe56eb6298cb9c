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

#include "geopath/gp_drift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geopath/errors.hpp"
#include "geopath/rng.hpp"
#include "linalg.hpp"

namespace geopath::gp {

namespace detail {
// Factorized (K + noise_c I) per output dimension of a dense fit.
struct DenseCache {
  std::vector<Eigen::LLT<Matrix>> per_dim;
};
}  // namespace detail

Points DriftField::evaluate(const Points& X) const {
  if (X.cols() != dim())
    throw InvalidParameter("drift field: query dimension mismatch");
  if (centers.rows() == 0) return Points::Zero(X.rows(), X.cols());
  return kernels::cross_kernel(X, centers, kernel) * coefficients;
}

Vector DriftField::evaluate(const Vector& x) const {
  return evaluate(Points(x.transpose())).row(0).transpose();
}

VectorField DriftField::as_function() const {
  auto self = std::make_shared<const DriftField>(*this);
  return [self](const Points& X) { return self->evaluate(X); };
}

DriftField DriftField::zero(const KernelSpec& kernel, const Vector& sigma) {
  DriftField f;
  f.kernel = kernel;
  f.centers.resize(0, kernel.dim());
  f.coefficients.resize(0, kernel.dim());
  f.sigma = sigma;
  return f;
}

void WeightedStateData::validate() const {
  if (weights.size() != points.rows() || responses.rows() != points.rows() ||
      responses.cols() != points.cols())
    throw InvalidParameter("weighted data: inconsistent dimensions");
  if ((weights.array() < 0.0).any())
    throw InvalidParameter("weighted data: weights must be >= 0");
}

WeightedStateData WeightedStateData::concatenate(
    const std::vector<WeightedStateData>& parts) {
  Eigen::Index n = 0, d = 0;
  for (const auto& p : parts) {
    n += p.size();
    if (p.size() > 0) d = p.points.cols();
  }
  WeightedStateData out;
  out.points.resize(n, d);
  out.weights.resize(n);
  out.responses.resize(n, d);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    out.points.middleRows(r, p.size()) = p.points;
    out.weights.segment(r, p.size()) = p.weights;
    out.responses.middleRows(r, p.size()) = p.responses;
    r += p.size();
  }
  return out;
}

IncrementPairs response_increments(const sde::Trajectory& traj) {
  if (traj.states.rows() < 2)
    throw InvalidParameter("increments: need at least two states");
  const Eigen::Index n = traj.states.rows() - 1;
  IncrementPairs out;
  out.dt = traj.dt;
  out.states = traj.states.topRows(n);
  out.responses =
      (traj.states.bottomRows(n) - traj.states.topRows(n)) / traj.dt;
  return out;
}

DriftField girsanov_gp_fit(const Points& X, const Matrix& Y, double dt,
                           const KernelSpec& kernel, const Vector& sigma,
                           int stride) {
  const int d = static_cast<int>(Y.cols());
  kernel.validate(static_cast<int>(X.cols()));
  if (X.rows() != Y.rows()) throw InvalidParameter("gp fit: X/Y size mismatch");
  if (!(dt > 0.0)) throw InvalidParameter("gp fit: dt must be > 0");
  if (stride < 1) throw InvalidParameter("gp fit: stride must be >= 1");
  if (sigma.size() != d) throw InvalidParameter("gp fit: sigma size mismatch");

  const Eigen::Index m = (X.rows() + stride - 1) / stride;
  Points Xs(m, X.cols());
  Matrix Ys(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    Xs.row(i) = X.row(i * stride);
    Ys.row(i) = Y.row(i * stride);
  }

  DriftField field;
  field.kind = DriftField::Kind::dense;
  field.kernel = kernel;
  field.sigma = sigma;
  field.dt = dt;
  field.centers = Xs;
  field.coefficients.resize(m, d);
  auto cache = std::make_shared<detail::DenseCache>();
  if (m == 0) {
    field.cache = cache;
    return field;
  }

  const Matrix K = kernels::cross_kernel(Xs, Xs, kernel);
  const bool shared_noise = (sigma.array() == sigma(0)).all();
  for (int c = 0; c < d; ++c) {
    if (c == 0 || !shared_noise) {
      Matrix A = K;
      A.diagonal().array() += sigma(c) * sigma(c) / dt;
      auto f = geopath::detail::factorize_spd(A, kernel.diagonal(), "gp fit");
      field.jitter = std::max(field.jitter, f.jitter);
      cache->per_dim.push_back(std::move(f.llt));
    } else {
      cache->per_dim.push_back(cache->per_dim.front());
    }
    field.coefficients.col(c) = cache->per_dim.back().solve(Ys.col(c));
  }
  field.cache = cache;
  return field;
}

DriftField girsanov_gp_fit(const sde::Trajectory& traj, const KernelSpec& kernel,
                           const Vector& sigma, int stride) {
  const IncrementPairs pairs = response_increments(traj);
  return girsanov_gp_fit(pairs.states, pairs.responses, pairs.dt, kernel, sigma,
                         stride);
}

Vector gp_predict_variance(const DriftField& field, const Vector& x) {
  const int d = field.dim();
  Vector var = Vector::Constant(d, field.kernel.diagonal());
  if (field.centers.rows() == 0) return var;
  if (field.kind != DriftField::Kind::dense)
    throw InvalidParameter("variance: only available for dense fits");

  std::shared_ptr<const detail::DenseCache> cache = field.cache;
  if (!cache) {
    // Fields loaded from disk carry no factorization; rebuild it.
    const DriftField refit =
        girsanov_gp_fit(field.centers, Matrix::Zero(field.centers.rows(), d),
                        field.dt, field.kernel, field.sigma, 1);
    cache = refit.cache;
  }
  const Vector kx =
      kernels::cross_kernel(Points(x.transpose()), field.centers, field.kernel)
          .row(0)
          .transpose();
  for (int c = 0; c < d; ++c) {
    const Vector v = cache->per_dim[c].matrixL().solve(kx);
    var(c) = std::max(0.0, field.kernel.diagonal() - v.squaredNorm());
  }
  return var;
}

Points select_inducing_points(const Points& points, int S, std::uint64_t seed) {
  if (S < 1) throw InvalidParameter("inducing: S must be >= 1");
  const Eigen::Index n = points.rows();
  if (S >= n) return points;
  Rng rng(seed);
  std::vector<Eigen::Index> chosen;
  chosen.reserve(S);
  chosen.push_back(static_cast<Eigen::Index>(rng.index(n)));
  Vector d2 = (points.rowwise() - points.row(chosen[0])).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < S) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2(pick);
        if (u < 0.0) break;
      }
      // Guard against landing on a zero-distance point through rounding.
      while (d2(pick) == 0.0 && pick > 0) --pick;
    } else {
      break;  // every remaining point coincides with a chosen one
    }
    chosen.push_back(pick);
    d2 = d2.cwiseMin(
        (points.rowwise() - points.row(pick)).rowwise().squaredNorm());
  }
  Points out(chosen.size(), points.cols());
  for (std::size_t i = 0; i < chosen.size(); ++i) out.row(i) = points.row(chosen[i]);
  return out;
}

WeightedStateData canonical_order(const WeightedStateData& data) {
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.points.cols();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < d; ++c) {
      if (data.points(a, c) != data.points(b, c))
        return data.points(a, c) < data.points(b, c);
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      if (data.responses(a, c) != data.responses(b, c))
        return data.responses(a, c) < data.responses(b, c);
    }
    return data.weights(a) < data.weights(b);
  });
  WeightedStateData out;
  out.points.resize(n, d);
  out.responses.resize(n, d);
  out.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.points.row(i) = data.points.row(idx[i]);
    out.responses.row(i) = data.responses.row(idx[i]);
    out.weights(i) = data.weights(idx[i]);
  }
  return out;
}

DriftField sparse_mstep_fit(const WeightedStateData& data, const Points& inducing,
                            const KernelSpec& kernel, const Vector& sigma) {
  data.validate();
  if (data.size() == 0) throw InvalidParameter("m-step: data is empty");
  if (inducing.rows() == 0) throw InvalidParameter("m-step: no inducing points");
  const int d = static_cast<int>(data.points.cols());
  kernel.validate(d);
  if (sigma.size() != d || !(sigma.array() > 0.0).all())
    throw InvalidParameter("m-step: sigma must be positive, one per dimension");

  const WeightedStateData ordered = canonical_order(data);
  const kernels::NormalEquations ne = kernels::weighted_normal_equations(
      ordered.points, ordered.weights, ordered.responses, inducing, kernel);
  const Matrix Ks = kernels::cross_kernel(inducing, inducing, kernel);

  DriftField field;
  field.kind = DriftField::Kind::sparse;
  field.kernel = kernel;
  field.sigma = sigma;
  field.centers = inducing;
  field.coefficients.resize(inducing.rows(), d);
  for (int c = 0; c < d; ++c) {
    const Matrix A = sigma(c) * sigma(c) * Ks + ne.gram;
    const double scale = A.diagonal().mean();
    auto f = geopath::detail::factorize_spd(A, scale, "m-step");
    field.jitter = std::max(field.jitter, f.jitter);
    field.coefficients.col(c) = f.llt.solve(ne.rhs.col(c));
  }
  return field;
}

}  // namespace geopath::gp
