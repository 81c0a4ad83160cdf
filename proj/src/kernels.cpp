#include "ulstm/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "ulstm/errors.hpp"

namespace ulstm::kernels {
namespace {

template <typename T>
struct Simd;
template <>
struct Simd<float> {
  typedef float V __attribute__((vector_size(64)));
  static constexpr std::size_t lanes = 16;
};
template <>
struct Simd<double> {
  typedef double V __attribute__((vector_size(64)));
  static constexpr std::size_t lanes = 8;
};

template <typename T>
struct AlignedAlloc {
  using value_type = T;
  AlignedAlloc() = default;
  template <typename U>
  AlignedAlloc(const AlignedAlloc<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64})); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{64}); }
  template <typename U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
};
template <typename T>
using Scratch = std::vector<T, AlignedAlloc<T>>;

constexpr std::size_t kMR = 6;
template <typename T>
constexpr std::size_t kNR = 2 * Simd<T>::lanes;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 96;
template <typename T>
constexpr std::size_t kNC = 64 * kNR<T>;

// Parallel regions below this many multiply-adds run inline.
constexpr std::size_t kParallelWork = 1 << 15;

template <typename T>
struct MatView {
  const T* p;
  std::size_t ld;
  bool trans;
  T operator()(std::size_t r, std::size_t c) const { return trans ? p[c * ld + r] : p[r * ld + c]; }
};

template <typename T>
void pack_a(const MatView<T>& a, std::size_t i0, std::size_t mc, std::size_t p0, std::size_t kc, T* dst) {
  const std::size_t slivers = (mc + kMR - 1) / kMR;
  for (std::size_t s = 0; s < slivers; ++s) {
    T* out = dst + s * kc * kMR;
    const std::size_t rows = std::min(kMR, mc - s * kMR);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t i = 0; i < kMR; ++i) {
        out[p * kMR + i] = i < rows ? a(i0 + s * kMR + i, p0 + p) : T(0);
      }
    }
  }
}

template <typename T>
void pack_b(const MatView<T>& b, std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nc, T* dst) {
  constexpr std::size_t nr = kNR<T>;
  const std::size_t slivers = (nc + nr - 1) / nr;
  const bool big = kc * nc > kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t s = 0; s < slivers; ++s) {
    T* out = dst + s * kc * nr;
    const std::size_t cols = std::min(nr, nc - s * nr);
    if (!b.trans && cols == nr) {
      for (std::size_t p = 0; p < kc; ++p) {
        std::memcpy(out + p * nr, b.p + (p0 + p) * b.ld + j0 + s * nr, nr * sizeof(T));
      }
      continue;
    }
    if (b.trans) {
      for (std::size_t j = 0; j < nr; ++j) {
        if (j >= cols) {
          for (std::size_t p = 0; p < kc; ++p) out[p * nr + j] = T(0);
          continue;
        }
        const T* src = b.p + (j0 + s * nr + j) * b.ld + p0;
        for (std::size_t p = 0; p < kc; ++p) out[p * nr + j] = src[p];
      }
      continue;
    }
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t j = 0; j < nr; ++j) {
        out[p * nr + j] = j < cols ? b(p0 + p, j0 + s * nr + j) : T(0);
      }
    }
  }
}

// acc[MR][NR] = sum_p Ap[p][:] (x) Bp[p][:]
template <typename T>
inline void micro_kernel(std::size_t kc, const T* __restrict ap, const T* __restrict bp, T* __restrict acc) {
  using V = typename Simd<T>::V;
  constexpr std::size_t lanes = Simd<T>::lanes;
  V c0[kMR] = {};
  V c1[kMR] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    V b0;
    V b1;
    std::memcpy(&b0, bp + p * kNR<T>, sizeof(V));
    std::memcpy(&b1, bp + p * kNR<T> + lanes, sizeof(V));
    const T* arow = ap + p * kMR;
#pragma GCC unroll 6
    for (std::size_t i = 0; i < kMR; ++i) {
      const T av = arow[i];
      c0[i] += av * b0;
      c1[i] += av * b1;
    }
  }
  for (std::size_t i = 0; i < kMR; ++i) {
    std::memcpy(acc + i * kNR<T>, &c0[i], sizeof(V));
    std::memcpy(acc + i * kNR<T> + lanes, &c1[i], sizeof(V));
  }
}

template <typename T>
void scale_c(std::size_t m, std::size_t n, T beta, T* c, std::size_t ldc) {
  if (beta == T(1)) return;
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

// Image rows [y0, y1) of the patch matrix; each patch row has (y1 - y0) * w entries.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, std::size_t y0, std::size_t y1, T* col) {
  const std::size_t h = g.height, w = g.width, hw = g.plane();
  const std::size_t ld = (y1 - y0) * w;
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kernel_h / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kernel_w / 2);
  const std::size_t rows = g.patch();
#pragma omp parallel for schedule(static) if (rows * ld > kParallelWork)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t c = row / (g.kernel_h * g.kernel_w);
    const std::ptrdiff_t ki = static_cast<std::ptrdiff_t>((row / g.kernel_w) % g.kernel_h) - ph;
    const std::ptrdiff_t kj = static_cast<std::ptrdiff_t>(row % g.kernel_w) - pw;
    const T* src = x + c * hw;
    T* dst = col + row * ld;
    const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -kj));
    const std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(w) - kj));
    for (std::size_t y = y0; y < y1; ++y) {
      const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + ki;
      T* out = dst + (y - y0) * w;
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || lo >= hi) {
        std::fill(out, out + w, T(0));
        continue;
      }
      const T* in = src + sy * static_cast<std::ptrdiff_t>(w) + kj;
      std::fill(out, out + lo, T(0));
      std::copy(in + lo, in + hi, out + lo);
      std::fill(out + hi, out + w, T(0));
    }
  }
}

// Adjoint of im2col over image rows [y0, y1).
template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, std::size_t y0, std::size_t y1, T* dx) {
  const std::size_t h = g.height, w = g.width, hw = g.plane();
  const std::size_t ld = (y1 - y0) * w;
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kernel_h / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kernel_w / 2);
  const std::size_t taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static) if (g.patch() * ld > kParallelWork)
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* dst = dx + c * hw;
    for (std::size_t t = 0; t < taps; ++t) {
      const std::ptrdiff_t ki = static_cast<std::ptrdiff_t>(t / g.kernel_w) - ph;
      const std::ptrdiff_t kj = static_cast<std::ptrdiff_t>(t % g.kernel_w) - pw;
      const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -kj));
      const std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(w) - kj));
      const T* src = col + (c * taps + t) * ld;
      for (std::size_t y = y0; y < y1; ++y) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + ki;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
        const T* in = src + (y - y0) * w;
        T* out = dst + sy * static_cast<std::ptrdiff_t>(w) + kj;
        for (std::size_t xx = lo; xx < hi; ++xx) out[xx] += in[xx];
      }
    }
  }
}

// Image rows per patch-matrix block, sized so a block stays cache resident.
template <typename T>
std::size_t block_rows(const ConvGeometry& g) {
  constexpr std::size_t kBlockBytes = std::size_t{768} << 10;
  const std::size_t per_row = g.patch() * g.width * sizeof(T);
  const std::size_t rows = std::clamp<std::size_t>(kBlockBytes / std::max<std::size_t>(per_row, 1), 1, g.height);
  // Split the image into equal blocks rather than leaving a thin remainder.
  const std::size_t blocks = (g.height + rows - 1) / rows;
  return (g.height + blocks - 1) / blocks;
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel_h == 1 && g.kernel_w == 1; }

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  scale_c(m, n, beta, c, ldc);
  if (m == 0 || n == 0 || k == 0 || alpha == T(0)) return;

  constexpr std::size_t nr = kNR<T>;
  const MatView<T> av{a, lda, trans_a};
  const MatView<T> bv{b, ldb, trans_b};
  thread_local Scratch<T> a_pack;
  thread_local Scratch<T> b_pack;
  a_pack.resize(kMC * kKC);
  b_pack.resize(kNC<T> * kKC);

  for (std::size_t jc = 0; jc < n; jc += kNC<T>) {
    const std::size_t nc = std::min(kNC<T>, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKC) {
      const std::size_t kc = std::min(kKC, k - pc);
      pack_b(bv, pc, kc, jc, nc, b_pack.data());
      for (std::size_t ic = 0; ic < m; ic += kMC) {
        const std::size_t mc = std::min(kMC, m - ic);
        pack_a(av, ic, mc, pc, kc, a_pack.data());
        const std::size_t m_slivers = (mc + kMR - 1) / kMR;
        const std::size_t n_slivers = (nc + nr - 1) / nr;
        const std::size_t tiles = m_slivers * n_slivers;
        const T* ap_base = a_pack.data();
        const T* bp_base = b_pack.data();
#pragma omp parallel for schedule(static) if (mc * nc * kc > kParallelWork)
        for (std::size_t tile = 0; tile < tiles; ++tile) {
          const std::size_t js = tile / m_slivers;
          const std::size_t is = tile % m_slivers;
          alignas(64) T acc[kMR * kNR<T>];
          micro_kernel(kc, ap_base + is * kc * kMR, bp_base + js * kc * nr, acc);
          const std::size_t rows = std::min(kMR, mc - is * kMR);
          const std::size_t cols = std::min(nr, nc - js * nr);
          for (std::size_t i = 0; i < rows; ++i) {
            T* crow = c + (ic + is * kMR + i) * ldc + jc + js * nr;
            const T* arow = acc + i * nr;
            for (std::size_t j = 0; j < cols; ++j) crow[j] += alpha * arow[j];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const std::size_t hw = g.plane();
  const std::size_t br = block_rows<T>(g);
  Scratch<T> col(is_pointwise(g) ? 0 : g.patch() * br * g.width);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x + n * g.in_channels * hw;
    T* yn = y + n * g.out_channels * hw;
    if (is_pointwise(g)) {
      gemm<T>(false, false, g.out_channels, hw, g.patch(), T(1), w, g.patch(), xn, hw, T(0), yn, hw);
    } else {
      for (std::size_t y0 = 0; y0 < g.height; y0 += br) {
        const std::size_t y1 = std::min(g.height, y0 + br);
        const std::size_t cols = (y1 - y0) * g.width;
        im2col(g, xn, y0, y1, col.data());
        gemm<T>(false, false, g.out_channels, cols, g.patch(), T(1), w, g.patch(), col.data(), cols, T(0),
                yn + y0 * g.width, hw);
      }
    }
    if (bias != nullptr) {
#pragma omp parallel for schedule(static) if (g.out_channels * hw > kParallelWork)
      for (std::size_t f = 0; f < g.out_channels; ++f) {
        T* row = yn + f * hw;
        for (std::size_t i = 0; i < hw; ++i) row[i] += bias[f];
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx) {
  const std::size_t hw = g.plane();
  const std::size_t br = block_rows<T>(g);
  Scratch<T> col(is_pointwise(g) ? 0 : g.patch() * br * g.width);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* dyn = dy + n * g.out_channels * hw;
    T* dxn = dx + n * g.in_channels * hw;
    if (is_pointwise(g)) {
      gemm<T>(true, false, g.in_channels, hw, g.out_channels, T(1), w, g.patch(), dyn, hw, T(1), dxn, hw);
      continue;
    }
    for (std::size_t y0 = 0; y0 < g.height; y0 += br) {
      const std::size_t y1 = std::min(g.height, y0 + br);
      const std::size_t cols = (y1 - y0) * g.width;
      gemm<T>(true, false, g.patch(), cols, g.out_channels, T(1), w, g.patch(), dyn + y0 * g.width, hw, T(0),
              col.data(), cols);
      col2im_add(g, col.data(), y0, y1, dxn);
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* dbias) {
  const std::size_t hw = g.plane();
  const std::size_t br = block_rows<T>(g);
  Scratch<T> col(is_pointwise(g) || dw == nullptr ? 0 : g.patch() * br * g.width);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* dyn = dy + n * g.out_channels * hw;
    if (dw != nullptr) {
      const T* xn = x + n * g.in_channels * hw;
      if (is_pointwise(g)) {
        gemm<T>(false, true, g.out_channels, g.patch(), hw, T(1), dyn, hw, xn, hw, T(1), dw, g.patch());
      } else {
        for (std::size_t y0 = 0; y0 < g.height; y0 += br) {
          const std::size_t y1 = std::min(g.height, y0 + br);
          const std::size_t cols = (y1 - y0) * g.width;
          im2col(g, xn, y0, y1, col.data());
          gemm<T>(false, true, g.out_channels, g.patch(), cols, T(1), dyn + y0 * g.width, hw, col.data(), cols, T(1),
                  dw, g.patch());
        }
      }
    }
    if (dbias != nullptr) {
      for (std::size_t f = 0; f < g.out_channels; ++f) {
        const T* row = dyn + f * hw;
        T s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += row[i];
        dbias[f] += s;
      }
    }
  }
}

template <typename T>
void maxpool2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y) {
  const std::size_t oh = height / 2, ow = width / 2;
#pragma omp parallel for schedule(static) if (planes * height * width > kParallelWork)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * height * width;
    T* dst = y + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const T* r0 = src + (2 * i) * width;
      const T* r1 = r0 + width;
      for (std::size_t j = 0; j < ow; ++j) {
        T best = r0[2 * j];
        if (r0[2 * j + 1] > best) best = r0[2 * j + 1];
        if (r1[2 * j] > best) best = r1[2 * j];
        if (r1[2 * j + 1] > best) best = r1[2 * j + 1];
        dst[i * ow + j] = best;
      }
    }
  }
}

template <typename T>
void maxpool2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* x, const T* dy, T* dx) {
  const std::size_t oh = height / 2, ow = width / 2;
#pragma omp parallel for schedule(static) if (planes * height * width > kParallelWork)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * height * width;
    T* dst = dx + p * height * width;
    const T* grad = dy + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t cand[4] = {2 * i * width + 2 * j, 2 * i * width + 2 * j + 1, (2 * i + 1) * width + 2 * j,
                                     (2 * i + 1) * width + 2 * j + 1};
        std::size_t best = cand[0];
        for (std::size_t q = 1; q < 4; ++q) {
          if (src[cand[q]] > src[best]) best = cand[q];
        }
        dst[best] += grad[i * ow + j];
      }
    }
  }
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Source taps for output index o of a factor-2 upsample over n inputs.
inline Tap upsample_tap(std::size_t o, std::size_t n) {
  double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(n - 1));
  const auto lo = static_cast<std::size_t>(std::floor(src));
  const std::size_t hi = std::min(lo + 1, n - 1);
  return {lo, hi, src - static_cast<double>(lo)};
}

}  // namespace

template <typename T>
void upsample2_forward(std::size_t planes, std::size_t height, std::size_t width, const T* x, T* y) {
  const std::size_t oh = 2 * height, ow = 2 * width;
  std::vector<Tap> rows(oh), cols(ow);
  for (std::size_t i = 0; i < oh; ++i) rows[i] = upsample_tap(i, height);
  for (std::size_t j = 0; j < ow; ++j) cols[j] = upsample_tap(j, width);
#pragma omp parallel for schedule(static) if (planes * oh * ow > kParallelWork)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * height * width;
    T* dst = y + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const Tap& r = rows[i];
      const T fy = static_cast<T>(r.frac);
      for (std::size_t j = 0; j < ow; ++j) {
        const Tap& c = cols[j];
        const T fx = static_cast<T>(c.frac);
        const T top = src[r.lo * width + c.lo] * (T(1) - fx) + src[r.lo * width + c.hi] * fx;
        const T bot = src[r.hi * width + c.lo] * (T(1) - fx) + src[r.hi * width + c.hi] * fx;
        dst[i * ow + j] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
}

template <typename T>
void upsample2_backward(std::size_t planes, std::size_t height, std::size_t width, const T* dy, T* dx) {
  const std::size_t oh = 2 * height, ow = 2 * width;
  std::vector<Tap> rows(oh), cols(ow);
  for (std::size_t i = 0; i < oh; ++i) rows[i] = upsample_tap(i, height);
  for (std::size_t j = 0; j < ow; ++j) cols[j] = upsample_tap(j, width);
#pragma omp parallel for schedule(static) if (planes * oh * ow > kParallelWork)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* grad = dy + p * oh * ow;
    T* dst = dx + p * height * width;
    for (std::size_t i = 0; i < oh; ++i) {
      const Tap& r = rows[i];
      const T fy = static_cast<T>(r.frac);
      for (std::size_t j = 0; j < ow; ++j) {
        const Tap& c = cols[j];
        const T fx = static_cast<T>(c.frac);
        const T g = grad[i * ow + j];
        dst[r.lo * width + c.lo] += g * (T(1) - fy) * (T(1) - fx);
        dst[r.lo * width + c.hi] += g * (T(1) - fy) * fx;
        dst[r.hi * width + c.lo] += g * fy * (T(1) - fx);
        dst[r.hi * width + c.hi] += g * fy * fx;
      }
    }
  }
}

template <typename T>
void lstm_cell_forward(std::size_t batch, std::size_t channels, std::size_t plane, const T* gates, const T* c_prev,
                       T* act, T* h, T* c) {
  const std::size_t span = channels * plane;
#pragma omp parallel for collapse(2) schedule(static) if (batch * span > kParallelWork)
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t e = 0; e < span; ++e) {
      const T* z = gates + n * 4 * span;
      T* a = act + n * 4 * span;
      const std::size_t s = n * span + e;
      const T ig = sigmoid(z[e]);
      const T fg = sigmoid(z[span + e]);
      const T og = sigmoid(z[2 * span + e]);
      const T cand = std::tanh(z[3 * span + e]);
      a[e] = ig;
      a[span + e] = fg;
      a[2 * span + e] = og;
      a[3 * span + e] = cand;
      const T cn = fg * c_prev[s] + ig * cand;
      c[s] = cn;
      h[s] = og * std::tanh(cn);
    }
  }
}

template <typename T>
void lstm_cell_backward(std::size_t batch, std::size_t channels, std::size_t plane, const T* act, const T* c_prev,
                        const T* c, const T* dh, const T* dc, T* dgates, T* dc_prev) {
  const std::size_t span = channels * plane;
#pragma omp parallel for collapse(2) schedule(static) if (batch * span > kParallelWork)
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t e = 0; e < span; ++e) {
      const T* a = act + n * 4 * span;
      T* dz = dgates + n * 4 * span;
      const std::size_t s = n * span + e;
      const T ig = a[e], fg = a[span + e], og = a[2 * span + e], cand = a[3 * span + e];
      const T tc = std::tanh(c[s]);
      const T gh = dh != nullptr ? dh[s] : T(0);
      const T dct = (dc != nullptr ? dc[s] : T(0)) + gh * og * (T(1) - tc * tc);
      dz[e] = dct * cand * ig * (T(1) - ig);
      dz[span + e] = dct * c_prev[s] * fg * (T(1) - fg);
      dz[2 * span + e] = gh * tc * og * (T(1) - og);
      dz[3 * span + e] = dct * ig * (T(1) - cand * cand);
      if (dc_prev != nullptr) dc_prev[s] += dct * fg;
    }
  }
}

template <typename T>
void channel_moments(std::size_t batch, std::size_t channels, std::size_t plane, const T* x, T* mean, T* var) {
  const double count = static_cast<double>(batch * plane);
#pragma omp parallel for schedule(static) if (batch * channels * plane > kParallelWork)
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* p = x + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    const double mu = s / count;
    double q = 0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* p = x + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mu;
        q += d * d;
      }
    }
    mean[c] = static_cast<T>(mu);
    var[c] = static_cast<T>(q / count);
  }
}

#define ULSTM_INSTANTIATE_KERNELS(T)                                                                          \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t, const T*, \
                        std::size_t, T, T*, std::size_t);                                                      \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                     \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);                        \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);                   \
  template void maxpool2_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);                     \
  template void maxpool2_backward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);          \
  template void upsample2_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);                    \
  template void upsample2_backward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);                   \
  template void lstm_cell_forward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, T*, T*);  \
  template void lstm_cell_backward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, const T*,    \
                                      const T*, const T*, T*, T*);                                            \
  template void channel_moments<T>(std::size_t, std::size_t, std::size_t, const T*, T*, T*);

ULSTM_INSTANTIATE_KERNELS(float)
ULSTM_INSTANTIATE_KERNELS(double)

#undef ULSTM_INSTANTIATE_KERNELS

}  // namespace ulstm::kernels

namespace ulstm {

int apply_thread_limit() {
  const char* env = std::getenv("ULSTM_THREADS");
  if (env != nullptr && *env != '\0') {
    const std::string text(env);
    int n = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc() || p != text.data() + text.size() || n <= 0) {
      throw UsageError("ULSTM_THREADS must be a positive integer, got '" + text + "'");
    }
    omp_set_num_threads(std::min(n, omp_get_num_procs()));
  }
  return omp_get_max_threads();
}

}  // namespace ulstm
