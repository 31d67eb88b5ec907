// Copyright 2026 The graft Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference loops against the OpenMP kernels on the shapes a
// training step uses (batch*seq rows, model width, vocabulary width).

#include <benchmark/benchmark.h>

#include <vector>

#include "graft/kernels.hpp"
#include "graft/rng.hpp"

namespace {

using Kernel = void (*)(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);

struct Operands {
  std::vector<float> a, b, c;
};

Operands make_operands(std::size_t m, std::size_t n, std::size_t k) {
  graft::Rng rng(42);
  Operands o{std::vector<float>(m * k), std::vector<float>(k * n), std::vector<float>(m * n)};
  for (auto& x : o.a) x = static_cast<float>(rng.normal());
  for (auto& x : o.b) x = static_cast<float>(rng.normal());
  return o;
}

void run(benchmark::State& state, Kernel kernel) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  auto o = make_operands(m, n, k);
  for (auto _ : state) {
    kernel(m, n, k, o.a.data(), o.b.data(), o.c.data(), false);
    benchmark::DoNotOptimize(o.c.data());
    benchmark::ClobberMemory();
  }
  state.counters["GFLOPs"] = benchmark::Counter(2.0 * double(m) * double(n) * double(k),
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({1024, 64, 64});     // attention projections
  b->Args({1024, 256, 64});    // MLP up
  b->Args({1024, 2000, 64});   // tied output head
  b->Unit(benchmark::kMillisecond);
}

void BM_gemm_nn_serial(benchmark::State& s) { run(s, graft::kernels::serial::gemm_nn<float>); }
void BM_gemm_nn_omp(benchmark::State& s) { run(s, graft::kernels::gemm_nn<float>); }
void BM_gemm_nt_serial(benchmark::State& s) { run(s, graft::kernels::serial::gemm_nt<float>); }
void BM_gemm_nt_omp(benchmark::State& s) { run(s, graft::kernels::gemm_nt<float>); }
void BM_gemm_tn_serial(benchmark::State& s) { run(s, graft::kernels::serial::gemm_tn<float>); }
void BM_gemm_tn_omp(benchmark::State& s) { run(s, graft::kernels::gemm_tn<float>); }

}  // namespace

BENCHMARK(BM_gemm_nn_serial)->Apply(shapes);
BENCHMARK(BM_gemm_nn_omp)->Apply(shapes);
BENCHMARK(BM_gemm_nt_serial)->Apply(shapes);
BENCHMARK(BM_gemm_nt_omp)->Apply(shapes);
BENCHMARK(BM_gemm_tn_serial)->Apply(shapes);
BENCHMARK(BM_gemm_tn_omp)->Apply(shapes);

BENCHMARK_MAIN();
