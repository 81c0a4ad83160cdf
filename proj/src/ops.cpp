#include "ulstm/ops.hpp"

#include <algorithm>
#include <cmath>

#include "ulstm/kernels.hpp"

namespace ulstm::ops {
namespace {

constexpr std::size_t kParallelWork = 1 << 15;

template <typename T>
bool tracking(std::initializer_list<const Var<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Var<T>* v : inputs) {
    if (v != nullptr && v->defined() && v->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Var<T> make_output(Tensor<T> value, bool track, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
#endif
  Var<T> out(std::move(value), track);
  out.node()->leaf = false;
  return out;
}

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
bool wants(const NodePtr<T>& n) {
  return n && n->requires_grad;
}

void require_nchw(const Shape& d, const char* op) { require_rank(d, 4, op); }

// Elementwise op whose derivative is a function of (input, output).
template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const Var<T>& x, const char* name, Fwd fwd, Deriv deriv) {
  const Tensor<T>& in = x.value();
  Tensor<T> out(in.dims());
  const std::size_t n = in.size();
  const T* src = in.data();
  T* dst = out.data();
#pragma omp parallel for simd schedule(static) if (n > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) dst[i] = fwd(src[i]);
  const bool track = tracking<T>({&x});
  Var<T> y = make_output(std::move(out), track, name);
  if (track) {
    NodePtr<T> xn = x.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [xn, yn, deriv] {
      const T* gy = yn->grad.data();
      const T* xv = xn->value.data();
      const T* yv = yn->value.data();
      T* gx = xn->grad_buffer().data();
      const std::size_t count = yn->value.size();
#pragma omp parallel for simd schedule(static) if (count > kParallelWork)
      for (std::size_t i = 0; i < count; ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
    });
  }
  return y;
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel) {
  return conv2d(x, kernel, Var<T>());
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias) {
  require_nchw(x.dims(), "conv2d input");
  require_rank(kernel.dims(), 4, "conv2d kernel");
  const Shape& xd = x.dims();
  const Shape& kd = kernel.dims();
  if (kd[1] != xd[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(xd[1]) + " channels, kernel expects " + std::to_string(kd[1]));
  }
  if (kd[2] % 2 == 0 || kd[3] % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd, got " + shape_string(kd));
  if (bias.defined() && bias.dims() != Shape{kd[0]}) {
    throw ShapeError("conv2d: bias shape " + shape_string(bias.dims()) + " for " + std::to_string(kd[0]) + " filters");
  }
  kernels::ConvGeometry g{xd[0], xd[1], kd[0], xd[2], xd[3], kd[2], kd[3]};
  Tensor<T> out({g.batch, g.out_channels, g.height, g.width});
  kernels::conv2d_forward<T>(g, x.value().data(), kernel.value().data(), bias.defined() ? bias.value().data() : nullptr,
                             out.data());
  const bool track = tracking<T>({&x, &kernel, &bias});
  Var<T> y = make_output(std::move(out), track, "conv2d");
  if (track) {
    NodePtr<T> xn = x.node(), kn = kernel.node(), bn = bias.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [g, xn, kn, bn, yn] {
      const T* dy = yn->grad.data();
      if (wants(xn)) kernels::conv2d_backward_input<T>(g, kn->value.data(), dy, xn->grad_buffer().data());
      T* dw = wants(kn) ? kn->grad_buffer().data() : nullptr;
      T* db = wants(bn) ? bn->grad_buffer().data() : nullptr;
      if (dw != nullptr || db != nullptr) kernels::conv2d_backward_weight<T>(g, xn->value.data(), dy, dw, db);
    });
  }
  return y;
}

template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  require_nchw(x.dims(), "maxpool2");
  const Shape& d = x.dims();
  if (d[2] % 2 != 0 || d[3] % 2 != 0) throw ShapeError("maxpool2: spatial extents must be even, got " + shape_string(d));
  Tensor<T> out({d[0], d[1], d[2] / 2, d[3] / 2});
  kernels::maxpool2_forward<T>(d[0] * d[1], d[2], d[3], x.value().data(), out.data());
  const bool track = tracking<T>({&x});
  Var<T> y = make_output(std::move(out), track, "maxpool2");
  if (track) {
    NodePtr<T> xn = x.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [xn, yn] {
      const Shape& s = xn->value.dims();
      kernels::maxpool2_backward<T>(s[0] * s[1], s[2], s[3], xn->value.data(), yn->grad.data(),
                                    xn->grad_buffer().data());
    });
  }
  return y;
}

template <typename T>
Var<T> upsample_bilinear2(const Var<T>& x) {
  require_nchw(x.dims(), "upsample_bilinear2");
  const Shape& d = x.dims();
  if (d[2] == 0 || d[3] == 0) throw ShapeError("upsample_bilinear2: empty spatial extent");
  Tensor<T> out({d[0], d[1], 2 * d[2], 2 * d[3]});
  kernels::upsample2_forward<T>(d[0] * d[1], d[2], d[3], x.value().data(), out.data());
  const bool track = tracking<T>({&x});
  Var<T> y = make_output(std::move(out), track, "upsample_bilinear2");
  if (track) {
    NodePtr<T> xn = x.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [xn, yn] {
      const Shape& s = xn->value.dims();
      kernels::upsample2_backward<T>(s[0] * s[1], s[2], s[3], yn->grad.data(), xn->grad_buffer().data());
    });
  }
  return y;
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(
      x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary(
      x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  require_nchw(a.dims(), "concat_channels");
  require_nchw(b.dims(), "concat_channels");
  const Shape& ad = a.dims();
  const Shape& bd = b.dims();
  if (ad[0] != bd[0] || ad[2] != bd[2] || ad[3] != bd[3]) {
    throw ShapeError("concat_channels: " + shape_string(ad) + " vs " + shape_string(bd));
  }
  const std::size_t n = ad[0], ca = ad[1], cb = bd[1], hw = ad[2] * ad[3];
  Tensor<T> out({n, ca + cb, ad[2], ad[3]});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.value().data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  const bool track = tracking<T>({&a, &b});
  Var<T> y = make_output(std::move(out), track, "concat_channels");
  if (track) {
    NodePtr<T> an = a.node(), bn = b.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [an, bn, yn, n, ca, cb, hw] {
      const T* gy = yn->grad.data();
      if (wants(an)) {
        T* ga = an->grad_buffer().data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t e = 0; e < ca * hw; ++e) ga[i * ca * hw + e] += gy[i * (ca + cb) * hw + e];
      }
      if (wants(bn)) {
        T* gb = bn->grad_buffer().data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t e = 0; e < cb * hw; ++e) gb[i * cb * hw + e] += gy[(i * (ca + cb) + ca) * hw + e];
      }
    });
  }
  return y;
}

template <typename T>
Var<T> softmax_channels(const Var<T>& logits) {
  require_nchw(logits.dims(), "softmax_channels");
  const Shape& d = logits.dims();
  if (d[1] < 2) throw ShapeError("softmax_channels: need at least two channels, got " + shape_string(d));
  const std::size_t n = d[0], c = d[1], hw = d[2] * d[3];
  Tensor<T> out(d);
  const T* z = logits.value().data();
  T* p = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t v = 0; v < hw; ++v) {
      const std::size_t base = i * c * hw + v;
      T m = z[base];
      for (std::size_t k = 1; k < c; ++k) m = std::max(m, z[base + k * hw]);
      T s = 0;
      for (std::size_t k = 0; k < c; ++k) {
        p[base + k * hw] = std::exp(z[base + k * hw] - m);
        s += p[base + k * hw];
      }
      for (std::size_t k = 0; k < c; ++k) p[base + k * hw] /= s;
    }
  }
  const bool track = tracking<T>({&logits});
  Var<T> y = make_output(std::move(out), track, "softmax_channels");
  if (track) {
    NodePtr<T> xn = logits.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [xn, yn, n, c, hw] {
      const T* gy = yn->grad.data();
      const T* pv = yn->value.data();
      T* gx = xn->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < hw; ++v) {
          const std::size_t base = i * c * hw + v;
          T dot = 0;
          for (std::size_t k = 0; k < c; ++k) dot += pv[base + k * hw] * gy[base + k * hw];
          for (std::size_t k = 0; k < c; ++k) gx[base + k * hw] += pv[base + k * hw] * (gy[base + k * hw] - dot);
        }
      }
    });
  }
  return y;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  Tensor<T> out(a.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const bool track = tracking<T>({&a, &b});
  Var<T> y = make_output(std::move(out), track, "add");
  if (track) {
    NodePtr<T> an = a.node(), bn = b.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [an, bn, yn] {
      const Tensor<T>& gy = yn->grad;
      for (const auto& in : {an, bn}) {
        if (!wants(in)) continue;
        Tensor<T>& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
    });
  }
  return y;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mul");
  Tensor<T> out(a.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const bool track = tracking<T>({&a, &b});
  Var<T> y = make_output(std::move(out), track, "mul");
  if (track) {
    NodePtr<T> an = a.node(), bn = b.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [an, bn, yn] {
      const Tensor<T>& gy = yn->grad;
      if (wants(an)) {
        Tensor<T>& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * bn->value[i];
      }
      if (wants(bn)) {
        Tensor<T>& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * an->value[i];
      }
    });
  }
  return y;
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary(
      a, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().values()) s += v;
  const bool track = tracking<T>({&a});
  Var<T> y = make_output(Tensor<T>(Shape{}, s), track, "sum");
  if (track) {
    NodePtr<T> an = a.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [an, yn] {
      const T g = yn->grad[0];
      for (T& v : an->grad_buffer().values()) v += g;
    });
  }
  return y;
}

template <typename T>
LstmCellOutput<T> lstm_cell(const Var<T>& gates, const Var<T>& c_prev) {
  require_nchw(gates.dims(), "lstm_cell gates");
  require_nchw(c_prev.dims(), "lstm_cell memory");
  const Shape& gd = gates.dims();
  const Shape& cd = c_prev.dims();
  if (gd[0] != cd[0] || gd[1] != 4 * cd[1] || gd[2] != cd[2] || gd[3] != cd[3]) {
    throw ShapeError("lstm_cell: gates " + shape_string(gd) + " incompatible with memory " + shape_string(cd));
  }
  const std::size_t n = cd[0], ch = cd[1], hw = cd[2] * cd[3];
  auto act = std::make_shared<Tensor<T>>(gd);
  Tensor<T> h(cd), c(cd);
  kernels::lstm_cell_forward<T>(n, ch, hw, gates.value().data(), c_prev.value().data(), act->data(), h.data(), c.data());
  const bool track = tracking<T>({&gates, &c_prev});
  LstmCellOutput<T> out{make_output(std::move(h), track, "lstm_cell"), make_output(std::move(c), track, "lstm_cell")};
  if (track) {
    NodePtr<T> zn = gates.node(), cpn = c_prev.node(), hn = out.h.node(), cn = out.c.node();
    Tape<T>::active()->record({hn, cn}, [zn, cpn, hn, cn, act, n, ch, hw] {
      Tensor<T> dz(zn->value.dims());
      kernels::lstm_cell_backward<T>(n, ch, hw, act->data(), cpn->value.data(), cn->value.data(),
                                     hn->has_grad() ? hn->grad.data() : nullptr,
                                     cn->has_grad() ? cn->grad.data() : nullptr, dz.data(),
                                     wants(cpn) ? cpn->grad_buffer().data() : nullptr);
      if (wants(zn)) {
        Tensor<T>& g = zn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dz[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> batch_norm_train(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T epsilon, Tensor<T>& batch_mean,
                        Tensor<T>& batch_var) {
  require_nchw(x.dims(), "batch_norm");
  const Shape& d = x.dims();
  const std::size_t n = d[0], c = d[1], hw = d[2] * d[3];
  if (n * hw < 2) {
    throw NumericError("batch_norm: training statistics need at least two values per channel, got shape " +
                       shape_string(d));
  }
  if (gamma.dims() != Shape{c} || beta.dims() != Shape{c}) throw ShapeError("batch_norm: affine parameters must be (C)");
  batch_mean = Tensor<T>({c});
  batch_var = Tensor<T>({c});
  kernels::channel_moments<T>(n, c, hw, x.value().data(), batch_mean.data(), batch_var.data());

  auto inv_std = std::make_shared<Tensor<T>>(Shape{c});
  auto xhat = std::make_shared<Tensor<T>>(d);
  Tensor<T> out(d);
  for (std::size_t k = 0; k < c; ++k) (*inv_std)[k] = T(1) / std::sqrt(batch_var[k] + epsilon);
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
#pragma omp parallel for collapse(2) schedule(static) if (n * c * hw > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t base = (i * c + k) * hw;
      for (std::size_t v = 0; v < hw; ++v) {
        const T xh = (xv[base + v] - batch_mean[k]) * (*inv_std)[k];
        (*xhat)[base + v] = xh;
        out[base + v] = gv[k] * xh + bv[k];
      }
    }
  }
  const bool track = tracking<T>({&x, &gamma, &beta});
  Var<T> y = make_output(std::move(out), track, "batch_norm");
  if (track) {
    NodePtr<T> xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [xn, gn, bn, yn, xhat, inv_std, n, c, hw] {
      const T* gy = yn->grad.data();
      const T count = static_cast<T>(n * hw);
      T* gx = wants(xn) ? xn->grad_buffer().data() : nullptr;
      T* gg = wants(gn) ? gn->grad_buffer().data() : nullptr;
      T* gb = wants(bn) ? bn->grad_buffer().data() : nullptr;
#pragma omp parallel for schedule(static) if (n * c * hw > kParallelWork)
      for (std::size_t k = 0; k < c; ++k) {
        T sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * c + k) * hw;
          for (std::size_t v = 0; v < hw; ++v) {
            sum_dy += gy[base + v];
            sum_dy_xhat += gy[base + v] * (*xhat)[base + v];
          }
        }
        if (gg != nullptr) gg[k] += sum_dy_xhat;
        if (gb != nullptr) gb[k] += sum_dy;
        if (gx == nullptr) continue;
        const T scale_k = gn->value[k] * (*inv_std)[k] / count;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * c + k) * hw;
          for (std::size_t v = 0; v < hw; ++v) {
            gx[base + v] += scale_k * (count * gy[base + v] - sum_dy - (*xhat)[base + v] * sum_dy_xhat);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Var<T> batch_norm_eval(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const Tensor<T>& running_mean,
                       const Tensor<T>& running_var, T epsilon) {
  require_nchw(x.dims(), "batch_norm");
  const Shape& d = x.dims();
  const std::size_t n = d[0], c = d[1], hw = d[2] * d[3];
  if (gamma.dims() != Shape{c} || beta.dims() != Shape{c} || running_mean.dims() != Shape{c} ||
      running_var.dims() != Shape{c}) {
    throw ShapeError("batch_norm: per-channel parameters must be (C)");
  }
  auto inv_std = std::make_shared<Tensor<T>>(Shape{c});
  for (std::size_t k = 0; k < c; ++k) (*inv_std)[k] = T(1) / std::sqrt(running_var[k] + epsilon);
  auto mean = std::make_shared<Tensor<T>>(running_mean);
  Tensor<T> out(d);
  const T* xv = x.value().data();
#pragma omp parallel for collapse(2) schedule(static) if (n * c * hw > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t base = (i * c + k) * hw;
      const T g = gamma.value()[k] * (*inv_std)[k];
      for (std::size_t v = 0; v < hw; ++v) out[base + v] = g * (xv[base + v] - (*mean)[k]) + beta.value()[k];
    }
  }
  const bool track = tracking<T>({&x, &gamma, &beta});
  Var<T> y = make_output(std::move(out), track, "batch_norm");
  if (track) {
    NodePtr<T> xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node();
    Tape<T>::active()->record({yn}, [xn, gn, bn, yn, mean, inv_std, n, c, hw] {
      const T* gy = yn->grad.data();
      const T* xv2 = xn->value.data();
      T* gx = wants(xn) ? xn->grad_buffer().data() : nullptr;
      T* gg = wants(gn) ? gn->grad_buffer().data() : nullptr;
      T* gb = wants(bn) ? bn->grad_buffer().data() : nullptr;
      for (std::size_t k = 0; k < c; ++k) {
        T sum_dy = 0, sum_dy_xhat = 0;
        const T s = gn->value[k] * (*inv_std)[k];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * c + k) * hw;
          for (std::size_t v = 0; v < hw; ++v) {
            sum_dy += gy[base + v];
            sum_dy_xhat += gy[base + v] * (xv2[base + v] - (*mean)[k]) * (*inv_std)[k];
            if (gx != nullptr) gx[base + v] += s * gy[base + v];
          }
        }
        if (gg != nullptr) gg[k] += sum_dy_xhat;
        if (gb != nullptr) gb[k] += sum_dy;
      }
    });
  }
  return y;
}

template <typename T>
Var<T> weighted_nll_sum(const Var<T>& logits, const Tensor<T>& target, const Tensor<T>& weights) {
  require_nchw(logits.dims(), "weighted_nll_sum");
  const Shape& d = logits.dims();
  const Shape pixels{d[0], d[2], d[3]};
  if (target.dims() != pixels || weights.dims() != pixels) {
    throw ShapeError("weighted_nll_sum: logits " + shape_string(d) + " need target/weights " + shape_string(pixels) +
                     ", got " + shape_string(target.dims()) + " / " + shape_string(weights.dims()));
  }
  if (!logits.value().all_finite()) throw NumericError("weighted_nll_sum: non-finite logits");
  const std::size_t n = d[0], c = d[1], hw = d[2] * d[3];
  const T* z = logits.value().data();
  auto prob = std::make_shared<Tensor<T>>(d);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t v = 0; v < hw; ++v) {
      const std::size_t base = i * c * hw + v;
      const auto cls = static_cast<std::size_t>(target[i * hw + v]);
      if (cls >= c) throw UsageError("weighted_nll_sum: target class out of range");
      T m = z[base];
      for (std::size_t k = 1; k < c; ++k) m = std::max(m, z[base + k * hw]);
      T s = 0;
      for (std::size_t k = 0; k < c; ++k) s += std::exp(z[base + k * hw] - m);
      const T log_norm = m + std::log(s);
      for (std::size_t k = 0; k < c; ++k) (*prob)[base + k * hw] = std::exp(z[base + k * hw] - log_norm);
      total += static_cast<double>(weights[i * hw + v]) * static_cast<double>(log_norm - z[base + cls * hw]);
    }
  }
  const bool track = tracking<T>({&logits});
  Var<T> y = make_output(Tensor<T>(Shape{}, static_cast<T>(total)), track, "weighted_nll_sum");
  if (track) {
    NodePtr<T> zn = logits.node(), yn = y.node();
    auto tgt = std::make_shared<Tensor<T>>(target);
    auto wts = std::make_shared<Tensor<T>>(weights);
    Tape<T>::active()->record({yn}, [zn, yn, prob, tgt, wts, n, c, hw] {
      const T g = yn->grad[0];
      T* gz = zn->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t v = 0; v < hw; ++v) {
          const std::size_t cls = static_cast<std::size_t>((*tgt)[i * hw + v]);
          const T w = g * (*wts)[i * hw + v];
          for (std::size_t k = 0; k < c; ++k) {
            const std::size_t idx = i * c * hw + k * hw + v;
            gz[idx] += w * ((*prob)[idx] - (k == cls ? T(1) : T(0)));
          }
        }
      }
    });
  }
  return y;
}

#define ULSTM_INSTANTIATE_OPS(T)                                                                             \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> maxpool2<T>(const Var<T>&);                                                                \
  template Var<T> upsample_bilinear2<T>(const Var<T>&);                                                      \
  template Var<T> sigmoid<T>(const Var<T>&);                                                                 \
  template Var<T> tanh<T>(const Var<T>&);                                                                    \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                           \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> softmax_channels<T>(const Var<T>&);                                                        \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                      \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                      \
  template Var<T> scale<T>(const Var<T>&, T);                                                                \
  template Var<T> sum<T>(const Var<T>&);                                                                     \
  template LstmCellOutput<T> lstm_cell<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> batch_norm_train<T>(const Var<T>&, const Var<T>&, const Var<T>&, T, Tensor<T>&, Tensor<T>&); \
  template Var<T> batch_norm_eval<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Tensor<T>&,          \
                                     const Tensor<T>&, T);                                                   \
  template Var<T> weighted_nll_sum<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&);

ULSTM_INSTANTIATE_OPS(float)
ULSTM_INSTANTIATE_OPS(double)

#undef ULSTM_INSTANTIATE_OPS

}  // namespace ulstm::ops
