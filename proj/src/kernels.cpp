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

#include "graft/kernels.hpp"

#include <algorithm>
#include <vector>

namespace graft::kernels {

namespace {

constexpr std::size_t kRowBlock = 64;

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) out[c * rows + r] = in[r * cols + c];
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < M; ++i) {
    T* __restrict crow = C + i * N;
    if (!accumulate) std::fill(crow, crow + N, T(0));
    const T* arow = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = arow[k];
      const T* __restrict brow = B + k * N;
      for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  std::vector<T> bt(N * K);
  transpose(N, K, B, bt.data());
  gemm_nn(M, N, K, A, bt.data(), C, accumulate);
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  const std::size_t blocks = (M + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * kRowBlock;
    const std::size_t i1 = std::min(M, i0 + kRowBlock);
    if (!accumulate) std::fill(C + i0 * N, C + i1 * N, T(0));
    for (std::size_t k = 0; k < K; ++k) {
      const T* arow = A + k * M;
      const T* __restrict brow = B + k * N;
      for (std::size_t i = i0; i < i1; ++i) {
        const T a = arow[i];
        T* __restrict crow = C + i * N;
        for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  }
}

namespace serial {

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += A[i * K + k] * B[k * N + j];
      C[i * N + j] = accumulate ? C[i * N + j] + s : s;
    }
  }
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += A[i * K + k] * B[j * K + k];
      C[i * N + j] = accumulate ? C[i * N + j] + s : s;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += A[k * M + i] * B[k * N + j];
      C[i * N + j] = accumulate ? C[i * N + j] + s : s;
    }
  }
}

}  // namespace serial

#define GRAFT_INSTANTIATE(T)                                                                      \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void serial::gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                                   bool);                                                         \
  template void serial::gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                                   bool);                                                         \
  template void serial::gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                                   bool);

GRAFT_INSTANTIATE(float)
GRAFT_INSTANTIATE(double)

#undef GRAFT_INSTANTIATE

}  // namespace graft::kernels
