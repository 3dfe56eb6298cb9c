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

#include "geopath/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "geopath/errors.hpp"

namespace geopath {

KernelSpec KernelSpec::isotropic(int dim, double lengthscale,
                                 double signal_variance) {
  KernelSpec k;
  k.lengthscales = Vector::Constant(dim, lengthscale);
  k.signal_variance = signal_variance;
  k.validate(dim);
  return k;
}

void KernelSpec::validate(int d) const {
  if (lengthscales.size() != d)
    throw InvalidParameter("kernel: expected " + std::to_string(d) +
                           " lengthscales, got " +
                           std::to_string(lengthscales.size()));
  if (!(lengthscales.array() > 0.0).all() || !lengthscales.allFinite())
    throw InvalidParameter("kernel: lengthscales must be positive");
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw InvalidParameter("kernel: signal_variance must be positive");
}

namespace kernels {
namespace {

void check_dims(const Points& X, const Points& Z, const KernelSpec& k) {
  if (X.cols() != Z.cols() || X.cols() != k.dim())
    throw InvalidParameter("kernel: dimension mismatch");
}

inline double se_value(const double* x, Eigen::Index xs, const double* z,
                       Eigen::Index zs, const double* inv_l, int d,
                       double var) {
  double r2 = 0.0;
  for (int c = 0; c < d; ++c) {
    const double u = (x[c * xs] - z[c * zs]) * inv_l[c];
    r2 += u * u;
  }
  return var * std::exp(-0.5 * r2);
}

void fill_cross_rows(const Points& X, const Points& Z, const KernelSpec& k,
                     Eigen::Index row_begin, Eigen::Index row_end, Matrix& K,
                     Eigen::Index out_offset) {
  const int d = k.dim();
  const Vector inv_l = k.lengthscales.cwiseInverse();
  for (Eigen::Index i = row_begin; i < row_end; ++i)
    for (Eigen::Index j = 0; j < Z.rows(); ++j)
      K(i - out_offset, j) =
          se_value(X.data() + i, X.outerStride(), Z.data() + j,
                   Z.outerStride(), inv_l.data(), d, k.signal_variance);
}

// Chunk partial of the normal equations, computed serially.
NormalEquations chunk_normal_equations(const Points& X, const Vector& w,
                                       const Matrix& Y, const Points& Z,
                                       const KernelSpec& k, Eigen::Index begin,
                                       Eigen::Index end) {
  const Eigen::Index n = end - begin;
  Matrix Kc(n, Z.rows());
  fill_cross_rows(X, Z, k, begin, end, Kc, begin);
  const Vector sw = w.segment(begin, n).cwiseSqrt();
  const Matrix Ks = sw.asDiagonal() * Kc;
  NormalEquations out;
  out.gram = Matrix::Zero(Z.rows(), Z.rows());
  out.gram.selfadjointView<Eigen::Lower>().rankUpdate(Ks.transpose());
  out.gram.triangularView<Eigen::StrictlyUpper>() =
      out.gram.transpose().triangularView<Eigen::StrictlyUpper>();
  out.rhs = Kc.transpose() *
            (w.segment(begin, n).asDiagonal() * Y.middleRows(begin, n));
  return out;
}

}  // namespace

Matrix cross_kernel(const Points& X, const Points& Z, const KernelSpec& k) {
  check_dims(X, Z, k);
  Matrix K(X.rows(), Z.rows());
  const Eigen::Index n = X.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < n; b += 64)
    fill_cross_rows(X, Z, k, b, std::min(n, b + 64), K, 0);
  return K;
}

NormalEquations weighted_normal_equations(const Points& X, const Vector& w,
                                          const Matrix& Y, const Points& Z,
                                          const KernelSpec& k) {
  check_dims(X, Z, k);
  if (w.size() != X.rows() || Y.rows() != X.rows())
    throw InvalidParameter("normal equations: row count mismatch");
  const Eigen::Index S = Z.rows();
  NormalEquations total{Matrix::Zero(S, S), Matrix::Zero(S, Y.cols())};
  const Eigen::Index n = X.rows();
  const Eigen::Index n_chunks = (n + kChunkRows - 1) / kChunkRows;
  // A fixed number of chunk partials is computed concurrently and folded in
  // chunk order, which pins the summation order independently of threads.
  constexpr Eigen::Index kBatch = 16;
  std::vector<NormalEquations> partial(kBatch);
  for (Eigen::Index c0 = 0; c0 < n_chunks; c0 += kBatch) {
    const Eigen::Index c1 = std::min(n_chunks, c0 + kBatch);
#pragma omp parallel for schedule(dynamic, 1)
    for (Eigen::Index c = c0; c < c1; ++c) {
      const Eigen::Index begin = c * kChunkRows;
      const Eigen::Index end = std::min(n, begin + kChunkRows);
      partial[c - c0] = chunk_normal_equations(X, w, Y, Z, k, begin, end);
    }
    for (Eigen::Index c = c0; c < c1; ++c) {
      total.gram += partial[c - c0].gram;
      total.rhs += partial[c - c0].rhs;
    }
  }
  return total;
}

Vector gaussian_kde(const Points& grid, const Points& obs, double bandwidth) {
  if (!(bandwidth > 0.0)) throw InvalidParameter("kde: bandwidth must be > 0");
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  Vector out(grid.rows());
  const Eigen::Index n = grid.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index g = 0; g < n; ++g) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < obs.rows(); ++i)
      s += std::exp(-(obs.row(i) - grid.row(g)).squaredNorm() * inv);
    out(g) = s;
  }
  return out;
}

Points local_weighted_spread(const Points& queries, const Points& support,
                             double sigma_m) {
  const double inv = 1.0 / (2.0 * sigma_m * sigma_m);
  Points out(queries.rows(), queries.cols());
  const Eigen::Index n = queries.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index q = 0; q < n; ++q) {
    // Accumulates in place; no temporaries in the inner loop.
    out.row(q).setZero();
    for (Eigen::Index i = 0; i < support.rows(); ++i) {
      const double w = std::exp(-(support.row(i) - queries.row(q)).squaredNorm() * inv);
      for (Eigen::Index c = 0; c < queries.cols(); ++c) {
        const double dlt = support(i, c) - queries(q, c);
        out(q, c) += w * dlt * dlt;
      }
    }
  }
  return out;
}

namespace serial {

Matrix cross_kernel(const Points& X, const Points& Z, const KernelSpec& k) {
  check_dims(X, Z, k);
  Matrix K(X.rows(), Z.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < Z.rows(); ++j) {
      const Vector u =
          (X.row(i) - Z.row(j)).transpose().cwiseQuotient(k.lengthscales);
      K(i, j) = k.signal_variance * std::exp(-0.5 * u.squaredNorm());
    }
  return K;
}

NormalEquations weighted_normal_equations(const Points& X, const Vector& w,
                                          const Matrix& Y, const Points& Z,
                                          const KernelSpec& k) {
  check_dims(X, Z, k);
  NormalEquations out{Matrix::Zero(Z.rows(), Z.rows()),
                      Matrix::Zero(Z.rows(), Y.cols())};
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    const Vector kj = cross_kernel(X.row(j), Z, k).transpose();
    out.gram += w(j) * kj * kj.transpose();
    out.rhs += w(j) * kj * Y.row(j);
  }
  return out;
}

Vector gaussian_kde(const Points& grid, const Points& obs, double bandwidth) {
  if (!(bandwidth > 0.0)) throw InvalidParameter("kde: bandwidth must be > 0");
  Vector out = Vector::Zero(grid.rows());
  for (Eigen::Index g = 0; g < grid.rows(); ++g)
    for (Eigen::Index i = 0; i < obs.rows(); ++i)
      out(g) += std::exp(-(obs.row(i) - grid.row(g)).squaredNorm() /
                         (2.0 * bandwidth * bandwidth));
  return out;
}

Points local_weighted_spread(const Points& queries, const Points& support,
                             double sigma_m) {
  Points out = Points::Zero(queries.rows(), queries.cols());
  for (Eigen::Index q = 0; q < queries.rows(); ++q)
    for (Eigen::Index i = 0; i < support.rows(); ++i) {
      const double w = std::exp(
          -(support.row(i) - queries.row(q)).squaredNorm() /
          (2.0 * sigma_m * sigma_m));
      for (Eigen::Index c = 0; c < queries.cols(); ++c) {
        const double dlt = support(i, c) - queries(q, c);
        out(q, c) += w * dlt * dlt;
      }
    }
  return out;
}

}  // namespace serial
}  // namespace kernels
}  // namespace geopath
