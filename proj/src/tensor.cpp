#include "attnforge/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace attnforge {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
typename TapeState<T>::Buffer& TapeState<T>::grad(std::size_t id) {
  auto& g = grads[id];
  if (g.empty()) g.assign(nodes[id].size, T{0});
  return g;
}

template <typename T>
std::size_t TapeState<T>::append(std::size_t size, std::vector<std::size_t> inputs, BackwardFn fn) {
  if (consumed) throw TapeError("tape already consumed by backward(); run a new forward pass");
  const std::size_t id = nodes.size();
  for (auto in : inputs) {
    if (in >= id) throw TapeError("tape node inputs must precede the node");
  }
  nodes.push_back(Node{size, std::move(inputs), std::move(fn)});
  grads.emplace_back();
  return id;
}

template struct TapeState<float>;
template struct TapeState<double>;

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(data))) {
  if (element_count(shape_) != data_->size()) {
    throw DimensionError("tensor shape " + to_string(shape_) + " holds " +
                         std::to_string(element_count(shape_)) + " elements, got " +
                         std::to_string(data_->size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return filled(std::move(shape), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value) {
  const auto n = element_count(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + to_string(shape_));
  return shape_[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + to_string(shape_));
  return shape_[1];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
  node_.reset();
  return {data_->data(), data_->size()};
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ContractError("item() needs a single-element tensor, got " + to_string(shape_));
  return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::detached() const {
  Tensor out = *this;
  out.node_.reset();
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::with_node(GradNode<T> node) const {
  Tensor out = *this;
  out.node_ = std::move(node);
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::view_as(Shape shape) const {
  if (element_count(shape) != size()) {
    throw DimensionError("cannot view " + to_string(shape_) + " as " + to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

template <typename T>
Tensor<T> Gradients<T>::of(const Tensor<T>& leaf) const {
  if (!leaf.tracked() || leaf.grad_node()->tape.get() != owner_) {
    throw TapeError("tensor was not tracked on this tape");
  }
  auto it = by_node_.find(leaf.grad_node()->id);
  if (it == by_node_.end()) throw TapeError("gradients exist only for leaves created by Tape::track");
  return it->second;
}

template <typename T>
Tape<T>::Tape() : state_(std::make_shared<detail::TapeState<T>>()) {}

template <typename T>
Tensor<T> Tape<T>::track(const Tensor<T>& value) {
  const auto id = state_->append(value.size(), {}, {});
  state_->leaves.emplace(id, value.shape());
  return value.with_node(GradNode<T>{state_, id});
}

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.tracked()) throw TapeError("loss is detached from any tape");
  if (loss.grad_node()->tape != state_) throw TapeError("loss was recorded on a different tape");
  if (state_->consumed) throw TapeError("backward() already ran on this tape; run a new forward pass");
  if (loss.size() != 1) throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));

  auto& st = *state_;
  const auto root = loss.grad_node()->id;
  st.grad(root)[0] = T{1};
  for (std::size_t k = root + 1; k-- > 0;) {
    auto& node = st.nodes[k];
    if (!node.backward || st.grads[k].empty()) continue;
    const auto upstream = std::move(st.grads[k]);
    node.backward(upstream, st);
    st.grads[k].clear();
  }

  Gradients<T> out;
  out.owner_ = state_.get();
  for (const auto& [id, shape] : st.leaves) {
    auto g = std::move(st.grads[id]);
    if (g.empty()) g.assign(element_count(shape), T{0});
    out.by_node_.emplace(id, Tensor<T>(shape, std::move(g)));
  }
  st.consumed = true;
  st.nodes.clear();
  st.nodes.shrink_to_fit();
  st.grads.clear();
  st.grads.shrink_to_fit();
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace attnforge
