#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnforge/tensor.hpp"

// Differentiable operations. Every op records a backward rule on the tape of its
// tracked inputs; if no input is tracked, nothing is recorded.
namespace attnforge {

/// c = a·b for a [n×k], b [k×p].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// out[i][j] = x[i][j] · diag[j]; equivalent to matmul(x, Diag(diag)).
template <typename T>
Tensor<T> diag_scale(const Tensor<T>& x, const Tensor<T>& diag);

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
/// x [n×d] plus a length-d row vector broadcast over rows.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row);
/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> transpose(const Tensor<T>& x);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Columns [begin, begin + count) of a matrix; used to split heads.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t count);
/// Horizontal concatenation; used to merge heads.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Row-wise layer normalisation with affine gamma/beta of length d.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = static_cast<T>(1e-12));

/// Rows of `table` [V×d] selected by `ids`.
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids);

/// Mean cross-entropy over rows whose target is >= 0; negative targets are ignored.
template <typename T>
Tensor<T> cross_entropy_with_logits(const Tensor<T>& logits, std::span<const std::int32_t> targets);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
/// Column means of a matrix as a [1×d] row.
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x);

}  // namespace attnforge
