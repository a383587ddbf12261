#include "kernels.hpp"

#include <algorithm>
#include <vector>

namespace attnforge::kernels {

namespace {
constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockP = 256;
constexpr std::size_t kRows = 4;
}  // namespace

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t p) {
  // Blocked i-k-j order. Four rows of c share every streamed row of b, which
  // cuts loads of b by four; leftover rows take the single-row path.
  for (std::size_t p0 = 0; p0 < p; p0 += kBlockP) {
    const std::size_t p1 = std::min(p, p0 + kBlockP);
    for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
      const std::size_t k1 = std::min(k, k0 + kBlockK);
      std::size_t i = 0;
      for (; i + kRows <= n; i += kRows) {
        T* __restrict c0 = c + i * p;
        T* __restrict c1 = c0 + p;
        T* __restrict c2 = c1 + p;
        T* __restrict c3 = c2 + p;
        const T* a0 = a + i * k;
        for (std::size_t t = k0; t < k1; ++t) {
          const T x0 = a0[t], x1 = a0[k + t], x2 = a0[2 * k + t], x3 = a0[3 * k + t];
          const T* __restrict bt = b + t * p;
          for (std::size_t j = p0; j < p1; ++j) {
            const T bv = bt[j];
            c0[j] += x0 * bv;
            c1[j] += x1 * bv;
            c2[j] += x2 * bv;
            c3[j] += x3 * bv;
          }
        }
      }
      for (; i < n; ++i) {
        const T* ai = a + i * k;
        T* __restrict ci = c + i * p;
        for (std::size_t t = k0; t < k1; ++t) {
          const T av = ai[t];
          const T* __restrict bt = b + t * p;
          for (std::size_t j = p0; j < p1; ++j) ci[j] += av * bt[j];
        }
      }
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t p) {
  // Transposing b once lets the vectorisable nn kernel do the work.
  std::vector<T> bt(k * p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t t = 0; t < k; ++t) bt[t * p + j] = b[j * k + t];
  }
  gemm_nn(a, bt.data(), c, n, k, p);
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t p) {
  std::vector<T> at(n * k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t t = 0; t < k; ++t) at[t * n + r] = a[r * k + t];
  }
  gemm_nn(at.data(), b, c, k, n, p);
}

template void gemm_nn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_nn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_nt<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_nt<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_tn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_tn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

}  // namespace attnforge::kernels
