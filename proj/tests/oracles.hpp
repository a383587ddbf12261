#pragma once

// Reference implementations used as test oracles. They share no code with the
// library: plain nested loops over row-major std::vector, long double where
// accumulation order matters.

#include <cmath>
#include <cstddef>
#include <vector>

#include "attnforge/rng.hpp"

namespace oracle {

using Mat = std::vector<double>;  // row-major

inline Mat matmul(const Mat& a, const Mat& b, std::size_t n, std::size_t k, std::size_t p) {
  Mat c(n * p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      long double s = 0;
      for (std::size_t t = 0; t < k; ++t) s += static_cast<long double>(a[i * k + t]) * b[t * p + j];
      c[i * p + j] = static_cast<double>(s);
    }
  }
  return c;
}

inline Mat transpose(const Mat& a, std::size_t n, std::size_t p) {
  Mat t(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) t[j * n + i] = a[i * p + j];
  }
  return t;
}

/// Explicit d×d matrix W·Diag(s).
inline Mat times_diag(const Mat& w, const std::vector<double>& s, std::size_t d) {
  Mat out(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = w[i * d + j] * s[j];
  }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& row) {
  long double mx = row[0];
  for (double v : row) mx = std::max<long double>(mx, v);
  long double total = 0;
  std::vector<long double> e(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) total += e[j] = std::exp(static_cast<long double>(row[j]) - mx);
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = static_cast<double>(e[j] / total);
  return out;
}

/// Multi-head attention from explicit role matrices. `u` holds one dh×dh
/// matrix per head, or is empty for plain dot-product scores. Empty bias
/// vectors mean no bias.
struct Explicit {
  std::size_t d = 0, heads = 1;
  Mat wq, wk, wv, wo;
  std::vector<double> bq, bk, bv, bo;
  std::vector<Mat> u;
};

inline Mat attention(const Explicit& e, const Mat& x, std::size_t n) {
  const std::size_t d = e.d, dh = d / e.heads;
  auto affine = [&](const Mat& w, const std::vector<double>& b) {
    Mat y = matmul(x, w, n, d, d);
    if (!b.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) y[i * d + j] += b[j];
      }
    }
    return y;
  };
  const Mat q = affine(e.wq, e.bq), k = affine(e.wk, e.bk), v = affine(e.wv, e.bv);
  Mat context(n * d, 0.0);
  for (std::size_t h = 0; h < e.heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      // qu = q_i·U_h (or q_i)
      std::vector<long double> qu(dh);
      for (std::size_t b = 0; b < dh; ++b) {
        if (e.u.empty()) {
          qu[b] = q[i * d + off + b];
        } else {
          long double s = 0;
          for (std::size_t a = 0; a < dh; ++a) s += static_cast<long double>(q[i * d + off + a]) * e.u[h][a * dh + b];
          qu[b] = s;
        }
      }
      std::vector<double> logits(n);
      for (std::size_t j = 0; j < n; ++j) {
        long double s = 0;
        for (std::size_t b = 0; b < dh; ++b) s += qu[b] * k[j * d + off + b];
        logits[j] = static_cast<double>(s / std::sqrt(static_cast<long double>(dh)));
      }
      const auto p = softmax(logits);
      for (std::size_t b = 0; b < dh; ++b) {
        long double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += static_cast<long double>(p[j]) * v[j * d + off + b];
        context[i * d + off + b] = static_cast<double>(s);
      }
    }
  }
  Mat out = matmul(context, e.wo, n, d, d);
  if (!e.bo.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += e.bo[j];
    }
  }
  return out;
}

inline Mat gaussian(std::size_t count, attnforge::Rng& rng, double mean = 0.0, double sigma = 1.0) {
  Mat m(count);
  for (auto& v : m) v = mean + sigma * rng.normal();
  return m;
}

/// Central finite difference of a scalar function of one coordinate.
template <typename F>
double central_difference(F&& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
