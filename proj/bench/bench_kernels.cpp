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

// OpenMP kernels against their serial twins at sizes typical of an EM run.

#include <benchmark/benchmark.h>

#include "geopath/kernels.hpp"
#include "geopath/rng.hpp"

namespace {

using namespace geopath;

Points cloud(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_matrix(n, 2);
}

const KernelSpec kSpec = KernelSpec::isotropic(2, 1.5, 10.0);

template <bool Parallel>
void BM_CrossKernel(benchmark::State& state) {
  const Points X = cloud(state.range(0), 1), Z = cloud(300, 2);
  for (auto _ : state) {
    Matrix K = Parallel ? kernels::cross_kernel(X, Z, kSpec)
                        : kernels::serial::cross_kernel(X, Z, kSpec);
    benchmark::DoNotOptimize(K.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 300);
}

// The M-step normal equations over the augmented cloud.
template <bool Parallel>
void BM_NormalEquations(benchmark::State& state) {
  const Points X = cloud(state.range(0), 3), Z = cloud(300, 4);
  const Vector w = Vector::Constant(X.rows(), 1e-4);
  const Matrix Y = cloud(X.rows(), 5);
  for (auto _ : state) {
    auto ne = Parallel ? kernels::weighted_normal_equations(X, w, Y, Z, kSpec)
                       : kernels::serial::weighted_normal_equations(X, w, Y, Z, kSpec);
    benchmark::DoNotOptimize(ne.gram.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Kde(benchmark::State& state) {
  const Points grid = cloud(900, 6), obs = cloud(state.range(0), 7);
  for (auto _ : state) {
    Vector d = Parallel ? kernels::gaussian_kde(grid, obs, 0.3)
                        : kernels::serial::gaussian_kde(grid, obs, 0.3);
    benchmark::DoNotOptimize(d.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 900);
}

// Metric evaluation at geodesic nodes against the observation support.
template <bool Parallel>
void BM_LocalSpread(benchmark::State& state) {
  const Points q = cloud(state.range(0), 8), support = cloud(1250, 9);
  for (auto _ : state) {
    Points s = Parallel ? kernels::local_weighted_spread(q, support, 0.1)
                        : kernels::serial::local_weighted_spread(q, support, 0.1);
    benchmark::DoNotOptimize(s.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 1250);
}

}  // namespace

BENCHMARK(BM_CrossKernel<true>)->Name("cross_kernel/parallel")->Arg(1000)->Arg(20000);
BENCHMARK(BM_CrossKernel<false>)->Name("cross_kernel/serial")->Arg(1000)->Arg(20000);
BENCHMARK(BM_NormalEquations<true>)->Name("normal_equations/parallel")->Arg(10000)->Arg(100000);
BENCHMARK(BM_NormalEquations<false>)->Name("normal_equations/serial")->Arg(10000)->Arg(100000);
BENCHMARK(BM_Kde<true>)->Name("kde/parallel")->Arg(1250)->Arg(10000);
BENCHMARK(BM_Kde<false>)->Name("kde/serial")->Arg(1250)->Arg(10000);
BENCHMARK(BM_LocalSpread<true>)->Name("local_spread/parallel")->Arg(32)->Arg(3200);
BENCHMARK(BM_LocalSpread<false>)->Name("local_spread/serial")->Arg(32)->Arg(3200);

BENCHMARK_MAIN();
