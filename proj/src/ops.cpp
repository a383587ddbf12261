#include "attnforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "kernels.hpp"

namespace attnforge {

namespace {

template <typename T>
using State = detail::TapeState<T>;
template <typename T>
using Buffer = typename State<T>::Buffer;

template <typename T>
std::optional<std::size_t> node_id(const Tensor<T>& t) {
  if (!t.tracked()) return std::nullopt;
  return t.grad_node()->id;
}

/// Attaches `out` to the tape shared by `inputs`. `backward` must only capture
/// detached tensors so the tape never owns a reference to itself.
template <typename T, typename Fn>
Tensor<T> record(const Tensor<T>& out, const std::vector<const Tensor<T>*>& inputs, Fn&& backward) {
  std::shared_ptr<State<T>> tape;
  std::vector<std::size_t> ids;
  for (const auto* in : inputs) {
    if (!in->tracked()) continue;
    const auto& node = *in->grad_node();
    if (tape && tape != node.tape) throw TapeError("operands were recorded on different tapes");
    tape = node.tape;
    ids.push_back(node.id);
  }
  if (!tape) return out;
  const auto id = tape->append(out.size(), std::move(ids), std::forward<Fn>(backward));
  return out.with_node(GradNode<T>{tape, id});
}

template <typename T>
void require_matrix(const Tensor<T>& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(x.shape()));
  }
}

template <typename T>
void require_vector(const Tensor<T>& v, std::size_t length, const char* op) {
  if (v.rank() != 1 || v.size() != length) {
    throw DimensionError(std::string(op) + ": expected a vector of length " + std::to_string(length) +
                         ", got " + to_string(v.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const std::size_t n = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
  std::vector<T> c(n * p, T{0});
  kernels::gemm_nn(a.data().data(), b.data().data(), c.data(), n, k, p);
  Tensor<T> out({n, p}, std::move(c));
  return record(out, {&a, &b},
                [a_id = node_id(a), b_id = node_id(b), av = a.detached(), bv = b.detached(), n, k, p](
                    const Buffer<T>& up, State<T>& st) {
                  if (a_id) kernels::gemm_nt(up.data(), bv.data().data(), st.grad(*a_id).data(), n, p, k);
                  if (b_id) kernels::gemm_tn(av.data().data(), up.data(), st.grad(*b_id).data(), n, k, p);
                });
}

template <typename T>
Tensor<T> diag_scale(const Tensor<T>& x, const Tensor<T>& diag) {
  require_matrix(x, "diag_scale");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  require_vector(diag, d, "diag_scale");
  std::vector<T> y(n * d);
  const auto xs = x.data();
  const auto ds = diag.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = xs[i * d + j] * ds[j];
  }
  return record(Tensor<T>({n, d}, std::move(y)), {&x, &diag},
                [x_id = node_id(x), g_id = node_id(diag), xv = x.detached(), dv = diag.detached(), n, d](
                    const Buffer<T>& up, State<T>& st) {
                  if (x_id) {
                    auto& gx = st.grad(*x_id);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += up[i * d + j] * dv[j];
                    }
                  }
                  if (g_id) {
                    auto& gd = st.grad(*g_id);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < d; ++j) gd[j] += up[i * d + j] * xv[i * d + j];
                    }
                  }
                });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t n = x.shape()[0], k = x.shape()[1];
  if (k == 0) throw DimensionError("softmax_rows: rows must have at least one entry");
  const auto xs = x.data();
  std::vector<T> y(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xs.data() + i * k;
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (std::isnan(row[j]) || row[j] == std::numeric_limits<T>::infinity()) {
        throw NumericError("softmax_rows: non-finite logit in row " + std::to_string(i));
      }
      hi = std::max(hi, row[j]);
    }
    // -inf marks masked entries; a fully masked row has no distribution.
    if (!std::isfinite(hi)) throw NumericError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    T total{0};
    for (std::size_t j = 0; j < k; ++j) {
      y[i * k + j] = std::exp(row[j] - hi);
      total += y[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) y[i * k + j] /= total;
  }
  Tensor<T> out({n, k}, std::move(y));
  return record(out, {&x}, [x_id = node_id(x), yv = out.detached(), n, k](const Buffer<T>& up, State<T>& st) {
    auto& gx = st.grad(*x_id);
    const auto ys = yv.data();
    for (std::size_t i = 0; i < n; ++i) {
      T dot{0};
      for (std::size_t j = 0; j < k; ++j) dot += up[i * k + j] * ys[i * k + j];
      for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += ys[i * k + j] * (up[i * k + j] - dot);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return record(Tensor<T>(a.shape(), std::move(y)), {&a, &b},
                [a_id = node_id(a), b_id = node_id(b)](const Buffer<T>& up, State<T>& st) {
                  for (auto id : {a_id, b_id}) {
                    if (!id) continue;
                    auto& g = st.grad(*id);
                    for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
                  }
                });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row) {
  require_matrix(x, "add_row");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  require_vector(row, d, "add_row");
  std::vector<T> y(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = x[i * d + j] + row[j];
  }
  return record(Tensor<T>({n, d}, std::move(y)), {&x, &row},
                [x_id = node_id(x), r_id = node_id(row), n, d](const Buffer<T>& up, State<T>& st) {
                  if (x_id) {
                    auto& gx = st.grad(*x_id);
                    for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i];
                  }
                  if (r_id) {
                    auto& gr = st.grad(*r_id);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < d; ++j) gr[j] += up[i * d + j];
                    }
                  }
                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return record(Tensor<T>(a.shape(), std::move(y)), {&a, &b},
                [a_id = node_id(a), b_id = node_id(b), av = a.detached(), bv = b.detached()](
                    const Buffer<T>& up, State<T>& st) {
                  if (a_id) {
                    auto& g = st.grad(*a_id);
                    for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * bv[i];
                  }
                  if (b_id) {
                    auto& g = st.grad(*b_id);
                    for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * av[i];
                  }
                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * factor;
  return record(Tensor<T>(x.shape(), std::move(y)), {&x},
                [x_id = node_id(x), factor](const Buffer<T>& up, State<T>& st) {
                  auto& g = st.grad(*x_id);
                  for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * factor;
                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_matrix(x, "transpose");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<T> y(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[j * n + i] = x[i * d + j];
  }
  return record(Tensor<T>({d, n}, std::move(y)), {&x}, [x_id = node_id(x), n, d](const Buffer<T>& up, State<T>& st) {
    auto& g = st.grad(*x_id);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += up[j * n + i];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  auto out = x.detached().view_as(std::move(shape));
  return record(out, {&x}, [x_id = node_id(x)](const Buffer<T>& up, State<T>& st) {
    auto& g = st.grad(*x_id);
    for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (begin + count > d) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") exceed " + to_string(x.shape()));
  }
  std::vector<T> y(n * count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = x[i * d + begin + j];
  }
  return record(Tensor<T>({n, count}, std::move(y)), {&x},
                [x_id = node_id(x), n, d, begin, count](const Buffer<T>& up, State<T>& st) {
                  auto& g = st.grad(*x_id);
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < count; ++j) g[i * d + begin + j] += up[i * count + j];
                  }
                });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: nothing to concatenate");
  const std::size_t n = parts.front().rows();
  std::size_t d = 0;
  std::vector<const Tensor<T>*> inputs;
  std::vector<std::size_t> offsets, widths;
  std::vector<std::optional<std::size_t>> ids;
  for (const auto& p : parts) {
    if (p.rows() != n) {
      throw DimensionError("concat_cols: row counts differ: " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    offsets.push_back(d);
    widths.push_back(p.cols());
    ids.push_back(node_id(p));
    inputs.push_back(&p);
    d += p.cols();
  }
  std::vector<T> y(n * d);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < widths[q]; ++j) y[i * d + offsets[q] + j] = parts[q][i * widths[q] + j];
    }
  }
  return record(Tensor<T>({n, d}, std::move(y)), inputs,
                [ids = std::move(ids), offsets = std::move(offsets), widths = std::move(widths), n, d](
                    const Buffer<T>& up, State<T>& st) {
                  for (std::size_t q = 0; q < ids.size(); ++q) {
                    if (!ids[q]) continue;
                    auto& g = st.grad(*ids[q]);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < widths[q]; ++j) g[i * widths[q] + j] += up[i * d + offsets[q] + j];
                    }
                  }
                });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T{0.5} * x[i] * (T{1} + std::erf(x[i] * inv_sqrt2));
  return record(Tensor<T>(x.shape(), std::move(y)), {&x},
                [x_id = node_id(x), xv = x.detached(), inv_sqrt2](const Buffer<T>& up, State<T>& st) {
                  const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
                  auto& g = st.grad(*x_id);
                  for (std::size_t i = 0; i < up.size(); ++i) {
                    const T v = xv[i];
                    const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
                    const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
                    g[i] += up[i] * (cdf + v * pdf);
                  }
                });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  require_vector(gamma, d, "layer_norm");
  require_vector(beta, d, "layer_norm");
  std::vector<T> xhat(n * d), inv_std(n), y(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += x[i * d + j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (x[i * d + j] - mu) * (x[i * d + j] - mu);
    var /= static_cast<T>(d);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (x[i * d + j] - mu) * inv_std[i];
      y[i * d + j] = xhat[i * d + j] * gamma[j] + beta[j];
    }
  }
  return record(Tensor<T>({n, d}, std::move(y)), {&x, &gamma, &beta},
                [x_id = node_id(x), g_id = node_id(gamma), b_id = node_id(beta), gv = gamma.detached(),
                 xhat = std::move(xhat), inv_std = std::move(inv_std), n, d](const Buffer<T>& up, State<T>& st) {
                  if (g_id) {
                    auto& gg = st.grad(*g_id);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < d; ++j) gg[j] += up[i * d + j] * xhat[i * d + j];
                    }
                  }
                  if (b_id) {
                    auto& gb = st.grad(*b_id);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < d; ++j) gb[j] += up[i * d + j];
                    }
                  }
                  if (x_id) {
                    auto& gx = st.grad(*x_id);
                    const T dn = static_cast<T>(d);
                    for (std::size_t i = 0; i < n; ++i) {
                      T sum_g{0}, sum_gx{0};
                      for (std::size_t j = 0; j < d; ++j) {
                        const T gh = up[i * d + j] * gv[j];
                        sum_g += gh;
                        sum_gx += gh * xhat[i * d + j];
                      }
                      for (std::size_t j = 0; j < d; ++j) {
                        const T gh = up[i * d + j] * gv[j];
                        gx[i * d + j] += inv_std[i] / dn * (dn * gh - sum_g - xhat[i * d + j] * sum_gx);
                      }
                    }
                  }
                });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "embedding_lookup");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  std::vector<T> y(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= v) {
      throw InputError("token id " + std::to_string(rows[i]) + " at position " + std::to_string(i) +
                       " is outside the vocabulary of " + std::to_string(v));
    }
    std::copy_n(table.data().begin() + rows[i] * d, d, y.begin() + i * d);
  }
  const std::size_t n = rows.size();
  return record(Tensor<T>({n, d}, std::move(y)), {&table},
                [t_id = node_id(table), rows = std::move(rows), d](const Buffer<T>& up, State<T>& st) {
                  auto& g = st.grad(*t_id);
                  for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (std::size_t j = 0; j < d; ++j) g[rows[i] * d + j] += up[i * d + j];
                  }
                });
}

template <typename T>
Tensor<T> cross_entropy_with_logits(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
  require_matrix(logits, "cross_entropy_with_logits");
  const std::size_t n = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != n) {
    throw DimensionError("cross_entropy_with_logits: " + std::to_string(targets.size()) + " targets for logits " +
                         to_string(logits.shape()));
  }
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  std::vector<T> probs(n * v, T{0});
  std::size_t counted = 0;
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    if (tg[i] < 0) continue;
    if (static_cast<std::size_t>(tg[i]) >= v) {
      throw InputError("target " + std::to_string(tg[i]) + " is outside " + std::to_string(v) + " classes");
    }
    const T* row = logits.data().data() + i * v;
    const T hi = *std::max_element(row, row + v);
    T z{0};
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(row[j] - hi);
      z += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total += std::log(z) + hi - row[tg[i]];
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy_with_logits: no target positions");
  const T inv = T{1} / static_cast<T>(counted);
  return record(Tensor<T>::scalar(total * inv), {&logits},
                [l_id = node_id(logits), probs = std::move(probs), tg = std::move(tg), v, inv](
                    const Buffer<T>& up, State<T>& st) {
                  auto& g = st.grad(*l_id);
                  const T s = up[0] * inv;
                  for (std::size_t i = 0; i < tg.size(); ++i) {
                    if (tg[i] < 0) continue;
                    for (std::size_t j = 0; j < v; ++j) g[i * v + j] += s * probs[i * v + j];
                    g[i * v + tg[i]] -= s;
                  }
                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total{0};
  for (auto value : x.data()) total += value;
  return record(Tensor<T>::scalar(total), {&x}, [x_id = node_id(x)](const Buffer<T>& up, State<T>& st) {
    auto& g = st.grad(*x_id);
    for (auto& gi : g) gi += up[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  require_matrix(x, "mean_rows");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (n == 0) throw ContractError("mean_rows of an empty matrix");
  std::vector<T> y(d, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[j] += x[i * d + j];
  }
  const T inv = T{1} / static_cast<T>(n);
  for (auto& value : y) value *= inv;
  return record(Tensor<T>({1, d}, std::move(y)), {&x}, [x_id = node_id(x), n, d, inv](const Buffer<T>& up, State<T>& st) {
    auto& g = st.grad(*x_id);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += up[j] * inv;
    }
  });
}

#define ATTNFORGE_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> diag_scale(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> transpose(const Tensor<T>&);                                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                 \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> embedding_lookup(const Tensor<T>&, std::span<const std::int32_t>);          \
  template Tensor<T> cross_entropy_with_logits(const Tensor<T>&, std::span<const std::int32_t>); \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> mean_rows(const Tensor<T>&);

ATTNFORGE_INSTANTIATE_OPS(float)
ATTNFORGE_INSTANTIATE_OPS(double)

#undef ATTNFORGE_INSTANTIATE_OPS

}  // namespace attnforge
