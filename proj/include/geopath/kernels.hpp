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

// Data-parallel numeric kernels shared by the GP, score and evaluation code.
//
// Every kernel in this header has a straightforward single-threaded twin in
// `geopath::kernels::serial`. The OpenMP versions are what the library uses;
// the serial ones exist so tests can check the parallel code against a
// reference and so the benchmark target can compare the two.
//
// Reductions in the parallel versions use a fixed chunking and sum chunk
// partials in chunk order, so results do not depend on the thread count.

#include <cstddef>

#include "geopath/types.hpp"

namespace geopath {

/// Squared-exponential kernel
///   k(x, y) = signal_variance * exp(-0.5 * sum_d ((x_d - y_d) / l_d)^2).
struct KernelSpec {
  Vector lengthscales;
  double signal_variance = 1.0;

  static KernelSpec isotropic(int dim, double lengthscale,
                              double signal_variance);

  int dim() const { return static_cast<int>(lengthscales.size()); }
  double diagonal() const { return signal_variance; }
  void validate(int dim) const;  // throws InvalidParameter
};

namespace kernels {

/// Rows processed per task in chunked reductions.
inline constexpr Eigen::Index kChunkRows = 2048;

/// K(i, j) = k(X_i, Z_j).
Matrix cross_kernel(const Points& X, const Points& Z, const KernelSpec& k);

/// Accumulated sparse-GP normal equations for weighted data:
///   gram = sum_j w_j k(Z, x_j) k(x_j, Z),   rhs = sum_j w_j k(Z, x_j) y_j^T.
struct NormalEquations {
  Matrix gram;
  Matrix rhs;
};

NormalEquations weighted_normal_equations(const Points& X, const Vector& w,
                                          const Matrix& Y, const Points& Z,
                                          const KernelSpec& k);

/// Unnormalized Gaussian KDE: density(g) = sum_i exp(-|grid_g - obs_i|^2 / 2h^2).
Vector gaussian_kde(const Points& grid, const Points& obs, double bandwidth);

/// Per-point local weighted second moments used by the learned metric:
///   S(x)_d = sum_i exp(-|x_i - x|^2 / 2 s^2) (x_i,d - x_d)^2.
Points local_weighted_spread(const Points& queries, const Points& support,
                             double sigma_m);

namespace serial {

Matrix cross_kernel(const Points& X, const Points& Z, const KernelSpec& k);
NormalEquations weighted_normal_equations(const Points& X, const Vector& w,
                                          const Matrix& Y, const Points& Z,
                                          const KernelSpec& k);
Vector gaussian_kde(const Points& grid, const Points& obs, double bandwidth);
Points local_weighted_spread(const Points& queries, const Points& support,
                             double sigma_m);

}  // namespace serial
}  // namespace kernels
}  // namespace geopath
