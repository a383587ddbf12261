#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "attnforge/errors.hpp"

namespace attnforge {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tape;
template <typename T>
class Tensor;

namespace detail {

/// Shared state behind a Tape. Nodes are appended during the forward pass and
/// replayed in reverse by backward().
template <typename T>
struct TapeState {
  using Buffer = std::vector<T>;
  using BackwardFn = std::function<void(const Buffer& upstream, TapeState& tape)>;

  struct Node {
    std::size_t size = 0;
    std::vector<std::size_t> inputs;
    BackwardFn backward;  // empty for leaves
  };

  std::vector<Node> nodes;
  std::vector<Buffer> grads;
  std::unordered_map<std::size_t, Shape> leaves;
  bool consumed = false;

  /// Gradient accumulator for node `id`, zero-initialised on first use.
  Buffer& grad(std::size_t id);
  std::size_t append(std::size_t size, std::vector<std::size_t> inputs, BackwardFn fn);
};

}  // namespace detail

/// Handle into the tape that produced a tensor.
template <typename T>
struct GradNode {
  std::shared_ptr<detail::TapeState<T>> tape;
  std::size_t id = 0;
};

/// Dense row-major tensor. Storage is shared between copies and copied on write,
/// so a Tensor behaves as a value.
template <typename T>
class Tensor {
 public:
  Tensor() : Tensor(Shape{0}, std::vector<T>{}) {}
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, T value);
  static Tensor scalar(T value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_->size(); }
  /// Extent of dimension 0 / 1 of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> data() const noexcept { return {data_->data(), data_->size()}; }
  /// Mutable access; detaches from shared storage and from the tape.
  std::span<T> mutable_data();

  T operator()(std::size_t i, std::size_t j) const { return (*data_)[i * shape_[1] + j]; }
  T operator[](std::size_t i) const { return (*data_)[i]; }
  T item() const;

  bool tracked() const noexcept { return node_.has_value(); }
  const std::optional<GradNode<T>>& grad_node() const noexcept { return node_; }
  /// Same values, no tape.
  Tensor detached() const;

  /// Tensor with this tensor's storage and a new node; used by the op layer.
  Tensor with_node(GradNode<T> node) const;
  /// Shares storage under a different shape with equal element count.
  Tensor view_as(Shape shape) const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::optional<GradNode<T>> node_;
};

/// Gradients of a loss with respect to the leaves of one tape.
template <typename T>
class Gradients {
 public:
  /// Gradient for a tensor returned by Tape::track; zeros when unreachable from the loss.
  Tensor<T> of(const Tensor<T>& leaf) const;

 private:
  friend class Tape<T>;
  const detail::TapeState<T>* owner_ = nullptr;
  std::unordered_map<std::size_t, Tensor<T>> by_node_;
};

/// Single-use record of one forward pass.
template <typename T>
class Tape {
 public:
  Tape();

  /// Registers `value` as a differentiable leaf.
  Tensor<T> track(const Tensor<T>& value);
  /// Reverse sweep from a scalar loss. The tape is consumed afterwards.
  Gradients<T> backward(const Tensor<T>& loss);

  std::size_t size() const noexcept { return state_->nodes.size(); }
  bool consumed() const noexcept { return state_->consumed; }

 private:
  std::shared_ptr<detail::TapeState<T>> state_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace attnforge
