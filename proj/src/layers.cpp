#include "ulstm/layers.hpp"

#include <cmath>

#include "ulstm/ops.hpp"

namespace ulstm {

template <typename T>
Tensor<T> fan_in_uniform(const Shape& kernel_dims, Rng& rng) {
  Tensor<T> w(kernel_dims);
  const std::size_t fan_in = w.size() / kernel_dims.at(0);
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (T& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

template <typename T>
Tensor<T> ClstmParams<T>::gate_kernel(Gate gate, bool recurrent) const {
  const std::size_t k2 = kernel_size * kernel_size;
  const std::size_t total_in = in_channels + out_channels;
  const std::size_t c0 = recurrent ? in_channels : 0;
  const std::size_t cn = recurrent ? out_channels : in_channels;
  Tensor<T> out({out_channels, cn, kernel_size, kernel_size});
  const std::size_t g = static_cast<std::size_t>(gate);
  for (std::size_t o = 0; o < out_channels; ++o)
    for (std::size_t c = 0; c < cn; ++c)
      for (std::size_t t = 0; t < k2; ++t)
        out[(o * cn + c) * k2 + t] = kernel.value()[((g * out_channels + o) * total_in + c0 + c) * k2 + t];
  return out;
}

template <typename T>
void ClstmParams<T>::set_gate_kernel(Gate gate, bool recurrent, const Tensor<T>& w) {
  const std::size_t k2 = kernel_size * kernel_size;
  const std::size_t total_in = in_channels + out_channels;
  const std::size_t c0 = recurrent ? in_channels : 0;
  const std::size_t cn = recurrent ? out_channels : in_channels;
  if (w.dims() != Shape{out_channels, cn, kernel_size, kernel_size}) {
    throw ShapeError("set_gate_kernel: got " + shape_string(w.dims()));
  }
  const std::size_t g = static_cast<std::size_t>(gate);
  Tensor<T>& dst = kernel.mutable_value();
  for (std::size_t o = 0; o < out_channels; ++o)
    for (std::size_t c = 0; c < cn; ++c)
      for (std::size_t t = 0; t < k2; ++t)
        dst[((g * out_channels + o) * total_in + c0 + c) * k2 + t] = w[(o * cn + c) * k2 + t];
}

template <typename T>
Tensor<T> ClstmParams<T>::gate_bias(Gate gate) const {
  Tensor<T> out({out_channels});
  const std::size_t g = static_cast<std::size_t>(gate);
  for (std::size_t o = 0; o < out_channels; ++o) out[o] = bias.value()[g * out_channels + o];
  return out;
}

template <typename T>
void ClstmParams<T>::zero_recurrent() {
  for (Gate g : {Gate::input, Gate::forget, Gate::output, Gate::candidate}) {
    set_gate_kernel(g, true, Tensor<T>({out_channels, out_channels, kernel_size, kernel_size}));
  }
}

template <typename T>
ClstmParams<T> make_clstm(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, Rng& rng) {
  if (kernel_size % 2 == 0) throw UsageError("make_clstm: kernel size must be odd");
  ClstmParams<T> p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.kernel_size = kernel_size;
  p.kernel = parameter(fan_in_uniform<T>({4 * out_channels, in_channels + out_channels, kernel_size, kernel_size}, rng));
  Tensor<T> b({4 * out_channels});
  for (std::size_t o = 0; o < out_channels; ++o) b[static_cast<std::size_t>(Gate::forget) * out_channels + o] = T(1);
  p.bias = parameter(std::move(b));
  return p;
}

template <typename T>
ClstmState<T> clstm_zero_state(std::size_t out_channels, std::size_t batch, std::size_t height, std::size_t width) {
  if (out_channels == 0 || batch == 0 || height == 0 || width == 0) throw UsageError("clstm_zero_state: zero extent");
  const Shape dims{batch, out_channels, height, width};
  return {Var<T>(Tensor<T>(dims)), Var<T>(Tensor<T>(dims))};
}

template <typename T>
ClstmState<T> clstm_step(const ClstmParams<T>& params, const Var<T>& x, const ClstmState<T>& prev) {
  require_rank(x.dims(), 4, "clstm_step input");
  const Shape& xd = x.dims();
  const Shape expected{xd[0], params.out_channels, xd[2], xd[3]};
  if (prev.h.dims() != expected || prev.c.dims() != expected) {
    throw ShapeError("clstm_step: state " + shape_string(prev.h.dims()) + " does not match input " + shape_string(xd) +
                     " with " + std::to_string(params.out_channels) + " state channels");
  }
  if (xd[1] != params.in_channels) {
    throw ShapeError("clstm_step: input has " + std::to_string(xd[1]) + " channels, cell expects " +
                     std::to_string(params.in_channels));
  }
  const Var<T> gates = ops::conv2d(ops::concat_channels(x, prev.h), params.kernel, params.bias);
  auto next = ops::lstm_cell(gates, prev.c);
  return {next.h, next.c};
}

template <typename T>
BatchNormParams<T> make_batch_norm(std::size_t channels, T momentum, T epsilon) {
  BatchNormParams<T> p;
  p.gamma = parameter(Tensor<T>({channels}, T(1)));
  p.beta = parameter(Tensor<T>({channels}, T(0)));
  p.running_mean = Tensor<T>({channels}, T(0));
  p.running_var = Tensor<T>({channels}, T(1));
  p.momentum = momentum;
  p.epsilon = epsilon;
  return p;
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, BatchNormParams<T>& params, Mode mode) {
  if (mode == Mode::eval) {
    return ops::batch_norm_eval(x, params.gamma, params.beta, params.running_mean, params.running_var, params.epsilon);
  }
  Tensor<T> mean, var;
  Var<T> y = ops::batch_norm_train(x, params.gamma, params.beta, params.epsilon, mean, var);
  const T m = params.momentum;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    params.running_mean[k] = (T(1) - m) * params.running_mean[k] + m * mean[k];
    params.running_var[k] = (T(1) - m) * params.running_var[k] + m * var[k];
  }
  return y;
}

template <typename T>
ConvBlockParams<T> make_conv_block(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                                   T bn_momentum, T bn_epsilon, Rng& rng) {
  ConvBlockParams<T> p;
  p.kernel = parameter(fan_in_uniform<T>({out_channels, in_channels, kernel_size, kernel_size}, rng));
  p.bn = make_batch_norm<T>(out_channels, bn_momentum, bn_epsilon);
  return p;
}

template <typename T>
Var<T> conv_block(const Var<T>& x, ConvBlockParams<T>& params, Mode mode, T slope) {
  return ops::leaky_relu(batch_norm(ops::conv2d(x, params.kernel), params.bn, mode), slope);
}

#define ULSTM_INSTANTIATE_LAYERS(T)                                                                         \
  template struct ClstmParams<T>;                                                                           \
  template Tensor<T> fan_in_uniform<T>(const Shape&, Rng&);                                                 \
  template ClstmParams<T> make_clstm<T>(std::size_t, std::size_t, std::size_t, Rng&);                       \
  template ClstmState<T> clstm_zero_state<T>(std::size_t, std::size_t, std::size_t, std::size_t);          \
  template ClstmState<T> clstm_step<T>(const ClstmParams<T>&, const Var<T>&, const ClstmState<T>&);         \
  template BatchNormParams<T> make_batch_norm<T>(std::size_t, T, T);                                        \
  template Var<T> batch_norm<T>(const Var<T>&, BatchNormParams<T>&, Mode);                                  \
  template ConvBlockParams<T> make_conv_block<T>(std::size_t, std::size_t, std::size_t, T, T, Rng&);        \
  template Var<T> conv_block<T>(const Var<T>&, ConvBlockParams<T>&, Mode, T);

ULSTM_INSTANTIATE_LAYERS(float)
ULSTM_INSTANTIATE_LAYERS(double)

#undef ULSTM_INSTANTIATE_LAYERS

}  // namespace ulstm
