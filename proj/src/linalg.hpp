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

// Internal helpers for symmetric positive-definite solves.

#include <Eigen/Cholesky>
#include <string>

#include "geopath/errors.hpp"
#include "geopath/types.hpp"

namespace geopath::detail {

struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

/// Cholesky of A; on failure of A + j * scale * I, walking j up the ladder
/// 1e-10 ... 1e-6 until the factorization succeeds. `scale` is the mean
/// kernel diagonal.
inline SpdFactor factorize_spd(const Matrix& A, double scale,
                               const std::string& what) {
  SpdFactor f;
  if (A.rows() == 0) return f;
  f.llt.compute(A);
  if (f.llt.info() == Eigen::Success) return f;
  for (double j = 1e-10; j <= 1.0001e-6; j *= 10.0) {
    Matrix B = A;
    B.diagonal().array() += j * scale;
    f.llt.compute(B);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = j * scale;
      return f;
    }
  }
  throw ConditioningError(what + ": system not positive definite after jitter");
}

}  // namespace geopath::detail
