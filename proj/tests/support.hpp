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

#include <cmath>
#include <cstdint>
#include <string>

#include "geopath/rng.hpp"
#include "geopath/types.hpp"

namespace geopath::test {

// f(x) = -theta x in any dimension.
inline VectorField linear_decay(double theta) {
  return [theta](const Points& X) { return Points(-theta * X); };
}

inline VectorField zero_field() {
  return [](const Points& X) { return Points(Points::Zero(X.rows(), X.cols())); };
}

inline VectorField constant_field(const Vector& c) {
  return [c](const Points& X) { return Points(c.transpose().replicate(X.rows(), 1)); };
}

inline Points normal_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_matrix(n, d);
}

inline Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

// Noisy unit circle, the annulus used by the geometry oracles.
inline Points noisy_circle(int n, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Points P(n, 2);
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * rng.uniform();
    P(i, 0) = std::cos(a) + noise * rng.normal();
    P(i, 1) = std::sin(a) + noise * rng.normal();
  }
  return P;
}

inline Vector column_mean(const Points& P) { return P.colwise().mean().transpose(); }

inline Vector column_var(const Points& P) {
  const Vector m = column_mean(P);
  return (P.rowwise() - m.transpose()).cwiseAbs2().colwise().sum().transpose() /
         static_cast<double>(P.rows() - 1);
}

}  // namespace geopath::test
