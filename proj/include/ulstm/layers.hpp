#pragma once

#include <cstddef>

#include "ulstm/autograd.hpp"
#include "ulstm/rng.hpp"

namespace ulstm {

enum class Mode { train, eval };

enum class Gate : std::size_t { input = 0, forget = 1, output = 2, candidate = 3 };

// Convolutional LSTM weights without peepholes. The kernel is stored fused:
// output channel block g*out..(g+1)*out belongs to gate g, and input channels
// [0, in) read x while [in, in+out) read the previous hidden state h.
template <typename T>
struct ClstmParams {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 3;
  Var<T> kernel;  // (4*out, in+out, k, k)
  Var<T> bias;    // (4*out)

  // W_x<gate> as (out, in, k, k), or W_h<gate> as (out, out, k, k).
  Tensor<T> gate_kernel(Gate gate, bool recurrent) const;
  void set_gate_kernel(Gate gate, bool recurrent, const Tensor<T>& w);
  Tensor<T> gate_bias(Gate gate) const;
  // Zeroes every W_h<gate> so the gates ignore the previous hidden state.
  void zero_recurrent();
};

template <typename T>
struct ClstmState {
  Var<T> h;
  Var<T> c;
};

// Fan-in scaled uniform kernels, forget-gate bias 1, other biases 0.
template <typename T>
ClstmParams<T> make_clstm(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, Rng& rng);

template <typename T>
ClstmState<T> clstm_zero_state(std::size_t out_channels, std::size_t batch, std::size_t height, std::size_t width);

// i,f,o = sigmoid(W_x*x + W_h*h + b), g = tanh(...), c' = f c + i g,
// h' = o tanh(c').
template <typename T>
ClstmState<T> clstm_step(const ClstmParams<T>& params, const Var<T>& x, const ClstmState<T>& prev);

template <typename T>
struct BatchNormParams {
  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);
};

template <typename T>
BatchNormParams<T> make_batch_norm(std::size_t channels, T momentum, T epsilon);

// Train mode normalises with batch moments over (N,H,W) and folds them into
// the running statistics; eval mode reads the running statistics only.
template <typename T>
Var<T> batch_norm(const Var<T>& x, BatchNormParams<T>& params, Mode mode);

// conv (no bias) -> batch norm -> leaky ReLU.
template <typename T>
struct ConvBlockParams {
  Var<T> kernel;  // (out, in, k, k)
  BatchNormParams<T> bn;
};

template <typename T>
ConvBlockParams<T> make_conv_block(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                                   T bn_momentum, T bn_epsilon, Rng& rng);

template <typename T>
Var<T> conv_block(const Var<T>& x, ConvBlockParams<T>& params, Mode mode, T slope);

// Uniform(-b, b) with b = sqrt(3 / fan_in).
template <typename T>
Tensor<T> fan_in_uniform(const Shape& kernel_dims, Rng& rng);

}  // namespace ulstm
