#include "ulstm/autograd.hpp"

namespace ulstm {

template <typename T>
Tape<T>*& Tape<T>::active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot();
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().rank() != 0) {
    throw UsageError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_string(loss.dims()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw UsageError("backward: loss does not depend on any trainable value");
  for (auto& r : records_) {
    for (auto& out : r.outputs) out->grad = Tensor<T>();
  }
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    bool reached = false;
    for (const auto& out : it->outputs) reached = reached || out->has_grad();
    if (reached) it->backward();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ulstm
