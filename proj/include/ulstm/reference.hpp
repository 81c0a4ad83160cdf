#pragma once

// Serial, unblocked versions of the kernels in kernels.hpp. They share
// signatures with the production kernels and are kept for testing and for
// the benchmark baseline. Convolutions are direct seven-loop sums and do not
// go through im2col or gemm.

#include "ulstm/kernels.hpp"

namespace ulstm::kernels::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* dbias);

template <typename T>
void maxpool2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y);
template <typename T>
void maxpool2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* x, const T* dy, T* dx);

template <typename T>
void upsample2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y);
template <typename T>
void upsample2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* dy, T* dx);

}  // namespace ulstm::kernels::reference
