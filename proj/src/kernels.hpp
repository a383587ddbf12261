#pragma once

#include <cstddef>

// Row-major GEMM kernels. All of them accumulate into `c`.
namespace attnforge::kernels {

/// c[n×p] += a[n×k] · b[k×p]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t p);

/// c[n×p] += a[n×k] · b[p×k]ᵀ
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t p);

/// c[k×p] += a[n×k]ᵀ · b[n×p]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t p);

}  // namespace attnforge::kernels
