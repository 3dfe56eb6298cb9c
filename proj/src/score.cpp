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

#include "geopath/score.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <vector>

#include "geopath/errors.hpp"
#include "geopath/rng.hpp"
#include "linalg.hpp"

namespace geopath::score {

namespace {
constexpr double kAffineRidge = 1e-6;
constexpr double kEigenFloor = 1e-12;
constexpr Eigen::Index kMedianCap = 1000;
}  // namespace

double median_pairwise_distance(const Points& samples) {
  const Eigen::Index n = std::min(samples.rows(), kMedianCap);
  // Deterministic thinning for large ensembles.
  const Eigen::Index stride = std::max<Eigen::Index>(1, samples.rows() / n);
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d.push_back((samples.row(i * stride) - samples.row(j * stride)).norm());
  if (d.empty()) return 0.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

Matrix ScoreEstimate::features(const Points& X) const {
  const Eigen::Index M = basis_.cols();
  const Eigen::Index d = X.cols();
  Matrix phi(X.rows(), coef_.rows());
  phi.leftCols(M) = kernels::cross_kernel(X, inducing_, kernel_) * basis_;
  if (affine_) {
    for (Eigen::Index c = 0; c < d; ++c)
      phi.col(M + c) = (X.col(c).array() - center_(c)) / scale_(c);
    phi.col(M + d).setOnes();
  }
  return phi;
}

std::vector<Matrix> ScoreEstimate::feature_gradients(const Points& X) const {
  const Eigen::Index M = inducing_.rows();
  const Eigen::Index r = basis_.cols();
  const Eigen::Index d = X.cols();
  const Matrix K = kernels::cross_kernel(X, inducing_, kernel_);
  std::vector<Matrix> out(d, Matrix::Zero(X.rows(), coef_.rows()));
  Matrix dK(X.rows(), M);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double il2 = 1.0 / (kernel_.lengthscales(c) * kernel_.lengthscales(c));
    for (Eigen::Index m = 0; m < M; ++m)
      dK.col(m) = -(K.col(m).array() * (X.col(c).array() - inducing_(m, c)) * il2).matrix();
    out[c].leftCols(r) = dK * basis_;
    if (affine_) out[c].col(r + c).setConstant(1.0 / scale_(c));
  }
  return out;
}

Points ScoreEstimate::evaluate(const Points& X) const {
  if (X.cols() != dim()) throw InvalidParameter("score: query dimension mismatch");
  return features(X) * coef_;
}

Vector ScoreEstimate::evaluate(const Vector& x) const {
  return evaluate(Points(x.transpose())).row(0).transpose();
}

double ScoreEstimate::matching_objective(const Points& X, const Vector& w) const {
  const Matrix s = evaluate(X);
  const auto grads = feature_gradients(X);
  double div_term = 0.0;
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    div_term += w.dot(grads[c] * coef_.col(c));
  return 0.5 * w.dot(s.rowwise().squaredNorm()) + div_term;
}

double ScoreEstimate::regularizer() const {
  double r = 0.0;
  for (Eigen::Index c = 0; c < coef_.cols(); ++c)
    r += coef_.col(c).dot(reg_ * coef_.col(c));
  return 0.5 * r;
}

void ScoreEstimate::dump_csv(std::ostream& os) const {
  const Eigen::Index d = inducing_.cols();
  os << std::setprecision(17);
  for (Eigen::Index c = 0; c < d; ++c) os << "z" << c + 1 << ',';
  for (Eigen::Index c = 0; c < d; ++c) os << "c" << c + 1 << (c + 1 < d ? "," : "\n");
  const Matrix coef = kernel_coefficients();
  for (Eigen::Index m = 0; m < inducing_.rows(); ++m) {
    for (Eigen::Index c = 0; c < d; ++c) os << inducing_(m, c) << ',';
    for (Eigen::Index c = 0; c < d; ++c)
      os << coef(m, c) << (c + 1 < d ? "," : "\n");
  }
}

ScoreEstimate estimate_score(const Points& samples, const Vector* weights,
                             const ScoreOptions& opt, std::uint64_t seed) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (opt.inducing < 1) throw InvalidParameter("score: need >= 1 inducing point");
  if (n < std::max<Eigen::Index>(opt.inducing, 10))
    throw InvalidParameter("score: need at least max(M, 10) samples");
  Vector w = weights ? *weights : Vector::Constant(n, 1.0);
  if (w.size() != n || (w.array() < 0.0).any() || !(w.sum() > 0.0))
    throw InvalidParameter("score: weights must be nonnegative with positive sum");
  w /= w.sum();

  ScoreEstimate est;
  est.affine_ = opt.affine_features;
  est.center_ = samples.transpose() * w;
  const Points centered = samples.rowwise() - est.center_.transpose();
  const Vector var = centered.cwiseAbs2().transpose() * w;
  est.scale_.resize(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double floor = 1e-12 * std::max(1.0, std::abs(est.center_(c)));
    if (!(var(c) > floor * floor))
      throw ConditioningError("score: degenerate sample, zero variance in dimension " +
                              std::to_string(c + 1));
    est.scale_(c) = std::sqrt(var(c));
  }

  // Inducing points: uniform draw among samples with positive weight.
  std::vector<Eigen::Index> pool;
  for (Eigen::Index j = 0; j < n; ++j)
    if (w(j) > 0.0) pool.push_back(j);
  Rng rng(seed);
  std::vector<Eigen::Index> picked;
  for (std::size_t i = 0; i < pool.size() && static_cast<int>(picked.size()) < opt.inducing; ++i) {
    const std::size_t r = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[r]);
    const Eigen::Index cand = pool[i];
    bool dup = false;
    for (auto p : picked)
      if ((samples.row(p) - samples.row(cand)).squaredNorm() == 0.0) {
        dup = true;
        break;
      }
    if (!dup) picked.push_back(cand);
  }
  est.inducing_.resize(picked.size(), d);
  for (std::size_t i = 0; i < picked.size(); ++i)
    est.inducing_.row(i) = samples.row(picked[i]);

  double ell = opt.lengthscale ? *opt.lengthscale : median_pairwise_distance(samples);
  if (!(ell > 0.0)) ell = est.scale_.mean();
  est.kernel_ = KernelSpec::isotropic(static_cast<int>(d), ell, 1.0);
  est.ridge_ = opt.ridge_factor * est.kernel_.diagonal();

  // Kernel features in the orthonormal eigenbasis of K_ZZ, so the RKHS
  // penalty becomes lambda * I and the solve stays well conditioned.
  // Directions below the rounding floor of K_ZZ carry no usable signal.
  const Matrix Kzz = kernels::cross_kernel(est.inducing_, est.inducing_, est.kernel_);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(Kzz);
  const Vector& ev = eig.eigenvalues();
  const double floor = kEigenFloor * ev.maxCoeff();
  Eigen::Index first = 0;
  while (first < ev.size() && ev(first) <= floor) ++first;
  const Eigen::Index M = ev.size() - first;
  est.basis_ = eig.eigenvectors().rightCols(M) *
               ev.tail(M).cwiseSqrt().cwiseInverse().asDiagonal();

  const Eigen::Index P = M + (est.affine_ ? d + 1 : 0);
  est.coef_.resize(P, d);
  est.reg_ = Matrix::Zero(P, P);
  est.reg_.topLeftCorner(M, M).diagonal().setOnes();
  if (est.affine_) est.reg_.bottomRightCorner(d + 1, d + 1).diagonal().setConstant(kAffineRidge);

  const Matrix phi = est.features(samples);
  const auto grads = est.feature_gradients(samples);
  const Matrix G = phi.transpose() * w.asDiagonal() * phi;
  const Matrix A = G + est.ridge_ * est.reg_;
  const auto f = geopath::detail::factorize_spd(A, A.diagonal().mean(), "score");
  for (Eigen::Index c = 0; c < d; ++c) {
    const Vector h = grads[c].transpose() * w;
    est.coef_.col(c) = -f.llt.solve(h);
  }
  return est;
}

}  // namespace geopath::score
