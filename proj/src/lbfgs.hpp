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

// Compact limited-memory BFGS with backtracking (Armijo) line search. Near
// the floating-point floor of f the Armijo test is decided by rounding, so a
// step is also accepted under the approximate Wolfe conditions of Hager and
// Zhang, which only need the directional derivative.

#include <cmath>
#include <deque>
#include <functional>

#include "geopath/types.hpp"

namespace geopath::detail {

struct LbfgsOptions {
  int max_iterations = 500;
  int memory = 8;
  double armijo = 1e-4;
  int max_backtracks = 40;
  double curvature = 0.9;
  double floor_slack = 1e-12;  // relative f increase tolerated by approximate Wolfe
  int max_stalls = 20;         // consecutive steps without a measurable decrease
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// `objective(x, grad)` returns f(x) and writes the gradient.
// `tolerance(f)` gives the gradient-norm threshold at objective value f.
inline LbfgsResult lbfgs_minimize(
    const std::function<double(const Vector&, Vector&)>& objective, Vector x,
    const std::function<double(double)>& tolerance, const LbfgsOptions& opt) {
  LbfgsResult res;
  Vector g(x.size());
  double f = objective(x, g);
  std::deque<Vector> S, Y;
  std::deque<double> rho;
  int it = 0, stalled = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.norm() <= tolerance(f)) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alpha(S.size());
    for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    else q *= 1.0 / std::max(1.0, g.norm());
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double beta = rho[i] * Y[i].dot(q);
      q += S[i] * (alpha[i] - beta);
    }
    Vector dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      S.clear();
      Y.clear();
      rho.clear();
    }
    double step = 1.0;
    Vector xn, gn(x.size());
    double fn = f;
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        // Quasi-Newton direction failed; retry along the gradient.
        if (S.empty()) break;
        dir = -g / std::max(1.0, g.norm());
        slope = g.dot(dir);
        S.clear();
        Y.clear();
        rho.clear();
      }
      step = 1.0;
      for (int b = 0; b < opt.max_backtracks; ++b) {
        xn = x + step * dir;
        fn = objective(xn, gn);
        if (std::isfinite(fn)) {
          if (fn <= f + opt.armijo * step * slope) {
            accepted = true;
            break;
          }
          const double dslope = gn.dot(dir);
          if (fn <= f + opt.floor_slack * std::abs(f) &&
              dslope >= opt.curvature * slope &&
              dslope <= (2.0 * opt.armijo - 1.0) * slope) {
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
    }
    if (!accepted) break;
    const Vector s = xn - x, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    const double df = f - fn;
    x = std::move(xn);
    g = gn;
    f = fn;
    stalled = df <= 1e-15 * std::max(1.0, std::abs(f)) ? stalled + 1 : 0;
    if (stalled >= opt.max_stalls) {
      // Stuck at the floating-point floor; report the actual state.
      res.converged = g.norm() <= tolerance(f);
      ++it;
      break;
    }
  }
  if (!res.converged) res.converged = g.norm() <= tolerance(f);
  res.x = std::move(x);
  res.value = f;
  res.gradient_norm = g.norm();
  res.iterations = it;
  return res;
}

}  // namespace geopath::detail
