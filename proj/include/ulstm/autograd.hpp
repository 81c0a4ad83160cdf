#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ulstm/tensor.hpp"

namespace ulstm {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows back
  bool requires_grad = false;
  bool leaf = true;

  // Gradient buffer, zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.dims());
    if (grad.dims() != value.dims()) grad = Tensor<T>(value.dims());
    return grad;
  }
  bool has_grad() const { return !grad.empty(); }
};

// Handle to a value in the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& dims() const { return node_->value.dims(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }

  // Accumulated gradient; empty tensor when nothing reached this value.
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// A trainable leaf.
template <typename T>
Var<T> parameter(Tensor<T> value) {
  return Var<T>(std::move(value), true);
}

// Same value, cut from the graph.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return Var<T>(v.value(), false);
}

// Ordered record of differentiable primitive applications. Ops record onto
// the tape active on the calling thread (see TapeGuard); with no active tape
// nothing is recorded and intermediates die with their handles.
template <typename T>
class Tape {
 public:
  struct Record {
    std::vector<std::shared_ptr<Node<T>>> outputs;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<std::shared_ptr<Node<T>>> outputs, std::function<void()> backward) {
    records_.push_back({std::move(outputs), std::move(backward)});
  }

  // Seeds d(loss)/d(loss) = 1 and replays every record in reverse.
  // Intermediate gradients are reset first, so repeated calls add the same
  // contribution to the leaves each time.
  void backward(const Var<T>& loss);

  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }

  static Tape* active();

 private:
  template <typename>
  friend class TapeGuard;
  template <typename>
  friend class NoGradGuard;
  static Tape*& active_slot();

  std::vector<Record> records_;
};

// Makes a tape active on this thread for the guard's lifetime.
template <typename T>
class TapeGuard {
 public:
  explicit TapeGuard(Tape<T>& tape) : previous_(Tape<T>::active_slot()) { Tape<T>::active_slot() = &tape; }
  ~TapeGuard() { Tape<T>::active_slot() = previous_; }
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape<T>* previous_;
};

// Disables recording on this thread for the guard's lifetime.
template <typename T>
class NoGradGuard {
 public:
  NoGradGuard() : previous_(Tape<T>::active_slot()) { Tape<T>::active_slot() = nullptr; }
  ~NoGradGuard() { Tape<T>::active_slot() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<T>* previous_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ulstm
