#include "ulstm/reference.hpp"

#include <algorithm>
#include <cmath>

namespace ulstm::kernels::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const T bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        s += av * bv;
      }
      T& out = c[i * ldc + j];
      out = (beta == T(0) ? T(0) : beta * out) + alpha * s;
    }
  }
}

namespace {

// Visits every (output pixel, kernel tap) pair whose input lies inside the image.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& fn) {
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  const auto ph = static_cast<std::ptrdiff_t>(g.kernel_h / 2);
  const auto pw = static_cast<std::ptrdiff_t>(g.kernel_w / 2);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.out_channels; ++f)
      for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x)
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.kernel_h); ++i)
              for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(g.kernel_w); ++j) {
                const std::ptrdiff_t sy = y + i - ph;
                const std::ptrdiff_t sx = x + j - pw;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                const std::size_t out = ((n * g.out_channels + f) * g.height + y) * g.width + x;
                const std::size_t in = ((n * g.in_channels + c) * g.height + sy) * g.width + sx;
                const std::size_t wi = ((f * g.in_channels + c) * g.kernel_h + i) * g.kernel_w + j;
                fn(out, in, wi);
              }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const std::size_t total = g.batch * g.out_channels * g.plane();
  for (std::size_t i = 0; i < total; ++i) {
    y[i] = bias != nullptr ? bias[(i / g.plane()) % g.out_channels] : T(0);
  }
  for_each_tap(g, [&](std::size_t out, std::size_t in, std::size_t wi) { y[out] += w[wi] * x[in]; });
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx) {
  for_each_tap(g, [&](std::size_t out, std::size_t in, std::size_t wi) { dx[in] += w[wi] * dy[out]; });
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* dbias) {
  if (dw != nullptr) {
    for_each_tap(g, [&](std::size_t out, std::size_t in, std::size_t wi) { dw[wi] += x[in] * dy[out]; });
  }
  if (dbias != nullptr) {
    const std::size_t total = g.batch * g.out_channels * g.plane();
    for (std::size_t i = 0; i < total; ++i) dbias[(i / g.plane()) % g.out_channels] += dy[i];
  }
}

template <typename T>
void maxpool2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y) {
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < height / 2; ++i)
      for (std::size_t j = 0; j < width / 2; ++j) {
        T best = x[(p * height + 2 * i) * width + 2 * j];
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) best = std::max(best, x[(p * height + 2 * i + di) * width + 2 * j + dj]);
        y[(p * (height / 2) + i) * (width / 2) + j] = best;
      }
}

template <typename T>
void maxpool2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* x, const T* dy, T* dx) {
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < height / 2; ++i)
      for (std::size_t j = 0; j < width / 2; ++j) {
        std::size_t best = (p * height + 2 * i) * width + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (p * height + 2 * i + di) * width + 2 * j + dj;
            if (x[idx] > x[best]) best = idx;
          }
        dx[best] += dy[(p * (height / 2) + i) * (width / 2) + j];
      }
}

namespace {

// Interpolation weight of input index s for output index o.
double upsample_weight(std::size_t o, std::size_t s, std::size_t n) {
  const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(n - 1));
  const double d = std::abs(src - static_cast<double>(s));
  return d < 1.0 ? 1.0 - d : 0.0;
}

}  // namespace

template <typename T>
void upsample2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y) {
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * height; ++i)
      for (std::size_t j = 0; j < 2 * width; ++j) {
        double s = 0;
        for (std::size_t si = 0; si < height; ++si)
          for (std::size_t sj = 0; sj < width; ++sj)
            s += upsample_weight(i, si, height) * upsample_weight(j, sj, width) * x[(p * height + si) * width + sj];
        y[(p * 2 * height + i) * 2 * width + j] = static_cast<T>(s);
      }
}

template <typename T>
void upsample2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* dy, T* dx) {
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * height; ++i)
      for (std::size_t j = 0; j < 2 * width; ++j)
        for (std::size_t si = 0; si < height; ++si)
          for (std::size_t sj = 0; sj < width; ++sj)
            dx[(p * height + si) * width + sj] += static_cast<T>(
                upsample_weight(i, si, height) * upsample_weight(j, sj, width) * dy[(p * 2 * height + i) * 2 * width + j]);
}

#define ULSTM_INSTANTIATE_REFERENCE(T)                                                                        \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t, const T*, \
                        std::size_t, T, T*, std::size_t);                                                      \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                     \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);                        \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);                   \
  template void maxpool2_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);                     \
  template void maxpool2_backward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);          \
  template void upsample2_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);                    \
  template void upsample2_backward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);

ULSTM_INSTANTIATE_REFERENCE(float)
ULSTM_INSTANTIATE_REFERENCE(double)

#undef ULSTM_INSTANTIATE_REFERENCE

}  // namespace ulstm::kernels::reference
