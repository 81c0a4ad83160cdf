#include "ulstm/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ulstm/ops.hpp"

namespace ulstm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb & Huttenlocher lower envelope of parabolas, in place.
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<std::size_t>& v, std::vector<double>& z) {
  const std::size_t n = f.size();
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] < kInf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = f[q] + static_cast<double>(q * q);
    double s = 0.0;
    while (true) {
      const double vk = static_cast<double>(v[k]);
      s = (fq - (f[v[k]] + vk * vk)) / (2.0 * (static_cast<double>(q) - vk));
      if (s > z[k] || k == 0) break;
      --k;
    }
    if (s <= z[k]) {
      v[k] = q;
      z[k + 1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

Grid<double> distance_transform(const BinaryMap& seeds) {
  const std::size_t h = seeds.height;
  const std::size_t w = seeds.width;
  Grid<double> sq(h, w, kInf);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds.pixels[i]) sq.pixels[i] = 0.0;
  }
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  for (std::size_t c = 0; c < w; ++c) {
    f.resize(h);
    d.resize(h);
    for (std::size_t r = 0; r < h; ++r) f[r] = sq(r, c);
    edt_1d(f, d, v, z);
    for (std::size_t r = 0; r < h; ++r) sq(r, c) = d[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    f.resize(w);
    d.resize(w);
    for (std::size_t c = 0; c < w; ++c) f[c] = sq(r, c);
    edt_1d(f, d, v, z);
    for (std::size_t c = 0; c < w; ++c) sq(r, c) = d[c];
  }
  for (double& x : sq.pixels) x = std::sqrt(x);
  return sq;
}

WeightMap compute_weight_map(const InstanceMap& labels, const WeightMapParams& params) {
  if (!(params.sigma > 0.0)) throw UsageError("weight map sigma must be positive");
  WeightMap out(labels.height, labels.width);
  std::map<std::int32_t, std::size_t> cells;
  for (std::int32_t l : labels.pixels) {
    if (l > 0) cells.emplace(l, 0);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.pixels[i] = static_cast<float>(labels.pixels[i] > 0 ? params.wc_foreground : params.wc_background);
  }
  if (cells.size() < 2) return out;

  std::vector<double> d1(labels.size(), kInf), d2(labels.size(), kInf);
  BinaryMap seeds(labels.height, labels.width);
  for (const auto& [label, unused] : cells) {
    for (std::size_t i = 0; i < labels.size(); ++i) seeds.pixels[i] = labels.pixels[i] == label ? 1 : 0;
    const Grid<double> dist = distance_transform(seeds);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double d = dist.pixels[i];
      if (d < d1[i]) {
        d2[i] = d1[i];
        d1[i] = d;
      } else if (d < d2[i]) {
        d2[i] = d;
      }
    }
  }
  const double denom = 2.0 * params.sigma * params.sigma;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double s = d1[i] + d2[i];
    const double base = labels.pixels[i] > 0 ? params.wc_foreground : params.wc_background;
    out.pixels[i] = static_cast<float>(base + params.w0 * std::exp(-s * s / denom));
  }
  return out;
}

std::pair<double, double> class_balance_weights(const std::vector<InstanceMap>& labels) {
  double fg = 0.0;
  double total = 0.0;
  for (const auto& m : labels) {
    for (std::int32_t l : m.pixels) fg += l > 0 ? 1.0 : 0.0;
    total += static_cast<double>(m.size());
  }
  const double bg = total - fg;
  if (fg == 0.0 || bg == 0.0) return {1.0, 1.0};
  const double inv_bg = total / bg;
  const double inv_fg = total / fg;
  const double s = 2.0 / (inv_bg + inv_fg);
  return {inv_bg * s, inv_fg * s};
}

template <typename T>
Tensor<T> class_targets(const std::vector<const InstanceMap*>& labels) {
  if (labels.empty()) throw UsageError("class_targets: no label maps");
  const std::size_t h = labels[0]->height;
  const std::size_t w = labels[0]->width;
  Tensor<T> out({labels.size(), h, w});
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n]->height != h || labels[n]->width != w) throw ShapeError("class_targets: label maps differ in size");
    for (std::size_t i = 0; i < h * w; ++i) out[n * h * w + i] = labels[n]->pixels[i] > 0 ? T(1) : T(0);
  }
  return out;
}

template <typename T>
Tensor<T> weight_tensor(const std::vector<const WeightMap*>& weights) {
  if (weights.empty()) throw UsageError("weight_tensor: no weight maps");
  const std::size_t h = weights[0]->height;
  const std::size_t w = weights[0]->width;
  Tensor<T> out({weights.size(), h, w});
  for (std::size_t n = 0; n < weights.size(); ++n) {
    if (weights[n]->height != h || weights[n]->width != w) throw ShapeError("weight_tensor: weight maps differ in size");
    for (std::size_t i = 0; i < h * w; ++i) out[n * h * w + i] = static_cast<T>(weights[n]->pixels[i]);
  }
  return out;
}

template <typename T>
Var<T> weighted_cross_entropy(const Var<T>& logits, const Tensor<T>& target, const Tensor<T>& weights) {
  double total = 0.0;
  for (T w : weights.values()) total += static_cast<double>(w);
  if (!(total > 0.0)) throw UsageError("weighted_cross_entropy: weights sum to zero");
  return ops::scale(ops::weighted_nll_sum(logits, target, weights), static_cast<T>(1.0 / total));
}

template Tensor<float> class_targets<float>(const std::vector<const InstanceMap*>&);
template Tensor<double> class_targets<double>(const std::vector<const InstanceMap*>&);
template Tensor<float> weight_tensor<float>(const std::vector<const WeightMap*>&);
template Tensor<double> weight_tensor<double>(const std::vector<const WeightMap*>&);
template Var<float> weighted_cross_entropy<float>(const Var<float>&, const Tensor<float>&, const Tensor<float>&);
template Var<double> weighted_cross_entropy<double>(const Var<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace ulstm
