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
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "geopath/kernels.hpp"
#include "geopath/types.hpp"

namespace geopath::score {

struct ScoreOptions {
  int inducing = 40;
  /// Ridge lambda_s = ridge_factor * mean kernel diagonal.
  double ridge_factor = 1e-3;
  /// Kernel lengthscale; the median pairwise sample distance when unset.
  std::optional<double> lengthscale;
  /// Adds centred linear and constant features next to the kernel features,
  /// so the estimate extrapolates like a Gaussian score away from the samples.
  bool affine_features = true;
};

/// s(x) ~ grad log p(x) from samples, by ridge-regularized score matching:
/// minimizes  sum_j w_j [ |s(x_j)|^2 / 2 + div s(x_j) ] + lambda/2 |s|_R^2
/// over s_d(x) = sum_m C_md k(x, z_m) (+ affine terms), with R the RKHS norm
/// on the kernel part.
class ScoreEstimate {
 public:
  Points evaluate(const Points& X) const;
  Vector evaluate(const Vector& x) const;

  const Points& inducing_points() const { return inducing_; }
  /// Coefficients on k(x, z_m), one column per dimension.
  Matrix kernel_coefficients() const { return basis_ * coef_.topRows(basis_.cols()); }
  const KernelSpec& kernel() const { return kernel_; }
  double ridge() const { return ridge_; }
  int dim() const { return static_cast<int>(inducing_.cols()); }

  /// Unregularized score-matching objective of this estimate on (X, w).
  double matching_objective(const Points& X, const Vector& w) const;
  /// Regularizer value  sum_d theta_d^T R theta_d / 2.
  double regularizer() const;

  /// (inducing points, coefficients) as CSV for debugging.
  void dump_csv(std::ostream& os) const;

 private:
  friend ScoreEstimate estimate_score(const Points&, const Vector*,
                                      const ScoreOptions&, std::uint64_t);
  Matrix features(const Points& X) const;
  // Gradient features: block c holds d phi / d x_c for every row.
  std::vector<Matrix> feature_gradients(const Points& X) const;

  Points inducing_;
  Vector center_;
  Vector scale_;
  bool affine_ = true;
  Matrix basis_;  // M x r, maps eigenbasis coefficients to k(., z_m) weights
  Matrix coef_;   // (r [+ d + 1]) x d
  Matrix reg_;   // R
  KernelSpec kernel_;
  double ridge_ = 0.0;
};

/// Fits a score estimate. `weights` may be null (uniform). Deterministic given
/// `seed`, which drives the uniform choice of inducing points.
ScoreEstimate estimate_score(const Points& samples, const Vector* weights,
                             const ScoreOptions& opt, std::uint64_t seed);

/// Median of pairwise Euclidean distances (subsampled for large inputs).
double median_pairwise_distance(const Points& samples);

using ScoreFunction = std::function<Points(const Points&)>;

inline ScoreFunction as_function(ScoreEstimate est) {
  auto p = std::make_shared<const ScoreEstimate>(std::move(est));
  return [p](const Points& X) { return p->evaluate(X); };
}

}  // namespace geopath::score
