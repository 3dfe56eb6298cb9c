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

#include <Eigen/Dense>
#include <functional>

namespace geopath {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A batch of states, one state per row.
using Points = Eigen::MatrixXd;

// Batched vector field: maps an n x d batch of states to an n x d batch.
using VectorField = std::function<Points(const Points&)>;

inline Points as_row(const Vector& x) { return x.transpose(); }

inline Vector evaluate_at(const VectorField& f, const Vector& x) {
  return f(as_row(x)).row(0).transpose();
}

}  // namespace geopath
