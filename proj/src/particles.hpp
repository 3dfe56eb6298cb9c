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

// Internal particle-ensemble helpers shared by the bridge flows.

#include <vector>

#include "geopath/rng.hpp"
#include "geopath/types.hpp"

namespace geopath::detail {

inline double effective_sample_size(const Vector& w) {
  const double s = w.sum();
  return s * s / w.squaredNorm();
}

// Systematic resampling; returns ancestor indices.
inline std::vector<Eigen::Index> systematic_resample(const Vector& w, Rng& rng) {
  const Eigen::Index n = w.size();
  std::vector<Eigen::Index> idx(n);
  const double total = w.sum();
  const double u0 = rng.uniform() / static_cast<double>(n);
  double cum = w(0) / total;
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = u0 + static_cast<double>(i) / static_cast<double>(n);
    while (u > cum && j + 1 < n) cum += w(++j) / total;
    idx[i] = j;
  }
  return idx;
}

}  // namespace geopath::detail
