#pragma once

// Differentiable primitives. Each op computes its value eagerly and, when a
// tape is active and some input requires a gradient, records its backward
// rule on that tape.

#include "ulstm/autograd.hpp"

namespace ulstm::ops {

// x[N,C,H,W] * kernel[F,C,kh,kw] (+ bias[F]) with zero same-padding, stride 1.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel);
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias);

template <typename T>
Var<T> maxpool2(const Var<T>& x);

template <typename T>
Var<T> upsample_bilinear2(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);
template <typename T>
Var<T> tanh(const Var<T>& x);
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

// Softmax over axis 1 of an (N,C,H,W) tensor.
template <typename T>
Var<T> softmax_channels(const Var<T>& logits);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
// Rank-0 sum of all elements.
template <typename T>
Var<T> sum(const Var<T>& a);

template <typename T>
struct LstmCellOutput {
  Var<T> h;
  Var<T> c;
};

// Pointwise half of a convolutional LSTM step. gates is (N,4C,H,W) holding
// pre-activations for the input, forget, output and candidate gates in that
// order; c_prev is (N,C,H,W).
template <typename T>
LstmCellOutput<T> lstm_cell(const Var<T>& gates, const Var<T>& c_prev);

// Batch normalisation with statistics over (N,H,W). The batch moments are
// written to batch_mean / batch_var so the caller can update running stats.
template <typename T>
Var<T> batch_norm_train(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T epsilon, Tensor<T>& batch_mean,
                        Tensor<T>& batch_var);
template <typename T>
Var<T> batch_norm_eval(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const Tensor<T>& running_mean,
                       const Tensor<T>& running_var, T epsilon);

// sum_v weights(v) * -log softmax(logits(v))[target(v)].
// target and weights are (N,H,W); target holds class indices.
template <typename T>
Var<T> weighted_nll_sum(const Var<T>& logits, const Tensor<T>& target, const Tensor<T>& weights);

}  // namespace ulstm::ops
