#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace povmap::detail {

// Row-major dense products backed by Eigen. All three accumulate into C when
// `accumulate` is set, otherwise overwrite it.

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

// C[M x N] (+)= A[M x K] * B[K x N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  MMap<T> c(C, M, N);
  if (accumulate) c.noalias() += CMap<T>(A, M, K) * CMap<T>(B, K, N);
  else c.noalias() = CMap<T>(A, M, K) * CMap<T>(B, K, N);
}

// C[M x N] (+)= A^T * B with A stored as [K x M], B as [K x N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  MMap<T> c(C, M, N);
  if (accumulate) c.noalias() += CMap<T>(A, K, M).transpose() * CMap<T>(B, K, N);
  else c.noalias() = CMap<T>(A, K, M).transpose() * CMap<T>(B, K, N);
}

// C[M x N] (+)= A * B^T with A stored as [M x K], B as [N x K]
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  MMap<T> c(C, M, N);
  if (accumulate) c.noalias() += CMap<T>(A, M, K) * CMap<T>(B, N, K).transpose();
  else c.noalias() = CMap<T>(A, M, K) * CMap<T>(B, N, K).transpose();
}

}  // namespace povmap::detail
