#pragma once

// Raw compute kernels behind the differentiable ops. Everything here works on
// contiguous row-major buffers; callers own shape checking. Loops over
// independent outputs are OpenMP-parallel, and every reduction runs in a
// fixed order so results do not depend on the thread count.
//
// reference.hpp holds naive serial versions of the same kernels for tests
// and benchmarks.

#include <cstddef>

namespace ulstm::kernels {

// C = alpha * op(A) * op(B) + beta * C. op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

// Stride-1 convolution with zero same-padding; kernel dims must be odd.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;

  std::size_t plane() const { return height * width; }
  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
};

// y[N,F,H,W] = conv(x[N,C,H,W], w[F,C,kh,kw]) + bias[F]; bias may be null.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

// dx += conv^T(dy).
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx);

// dw += dy (x) x, dbias += sum(dy); either output may be null.
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* dbias);

// planes = N*C. Ties go to the first element of the window in row-major order.
template <typename T>
void maxpool2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y);
template <typename T>
void maxpool2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* x, const T* dy, T* dx);

// Factor-2 bilinear upsampling with half-pixel centers and edge clamping.
// height/width are the input extents.
template <typename T>
void upsample2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y);
template <typename T>
void upsample2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* dy, T* dx);

// Convolutional LSTM pointwise update. gates holds pre-activations laid out
// (N, 4C, HW) in gate order input, forget, output, candidate. act receives the
// activated gates in the same layout for the backward pass.
template <typename T>
void lstm_cell_forward(std::size_t batch, std::size_t channels, std::size_t plane, const T* gates, const T* c_prev,
                       T* act, T* h, T* c);

// dh/dc may be null (no upstream gradient). dgates is overwritten; dc_prev
// is accumulated when non-null.
template <typename T>
void lstm_cell_backward(std::size_t batch, std::size_t channels, std::size_t plane, const T* act, const T* c_prev,
                        const T* c, const T* dh, const T* dc, T* dgates, T* dc_prev);

// Per-channel mean and biased variance over (N, H, W).
template <typename T>
void channel_moments(std::size_t batch, std::size_t channels, std::size_t plane, const T* x, T* mean, T* var);

}  // namespace ulstm::kernels

namespace ulstm {

// Caps the OpenMP worker count from ULSTM_THREADS when set. Returns the
// resulting thread count; UsageError for a non-positive or malformed value.
int apply_thread_limit();

}  // namespace ulstm
