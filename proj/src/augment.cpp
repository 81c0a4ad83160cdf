#include "ulstm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>

namespace ulstm {

AugmentSpec AugmentSpec::identity() {
  AugmentSpec s;
  s.flips = false;
  s.rotate90 = false;
  s.reverse = false;
  s.max_temporal_k = 0;
  s.affine = false;
  s.elastic = false;
  return s;
}

bool AugmentDraw::warps() const {
  return rotation_rad != 0.0 || scale != 1.0 || shear_rad != 0.0 || !grid_dx.empty();
}

template <typename P>
Grid<P> flip_horizontal(const Grid<P>& g) {
  Grid<P> out(g.height, g.width);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) out(r, c) = g(r, g.width - 1 - c);
  }
  return out;
}

template <typename P>
Grid<P> flip_vertical(const Grid<P>& g) {
  Grid<P> out(g.height, g.width);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) out(r, c) = g(g.height - 1 - r, c);
  }
  return out;
}

template <typename P>
Grid<P> rotate90(const Grid<P>& g, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return g;
  Grid<P> out = (q == 2) ? Grid<P>(g.height, g.width) : Grid<P>(g.width, g.height);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      switch (q) {
        case 1:  // counter-clockwise
          out(g.width - 1 - c, r) = g(r, c);
          break;
        case 2:
          out(g.height - 1 - r, g.width - 1 - c) = g(r, c);
          break;
        default:
          out(c, g.height - 1 - r) = g(r, c);
          break;
      }
    }
  }
  return out;
}

template <typename P>
Grid<P> crop(const Grid<P>& g, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  if (y + h > g.height || x + w > g.width) {
    throw UsageError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(y) + "," +
                     std::to_string(x) + ") exceeds a " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                     " frame");
  }
  Grid<P> out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(g.pixels.begin() + static_cast<std::ptrdiff_t>((y + r) * g.width + x), w,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return out;
}

namespace {

// Cubic convolution weights (a = -0.5) for fractional offset t.
void cubic_weights(double t, double w[4]) {
  constexpr double a = -0.5;
  const double d[4] = {1.0 + t, t, 1.0 - t, 2.0 - t};
  for (int i = 0; i < 4; ++i) {
    const double x = d[i];
    w[i] = x <= 1.0 ? ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0 : ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  }
}

// Bicubic upsampling of a control grid to a dense (h x w) field.
std::vector<double> dense_field(const std::vector<double>& grid, std::size_t rows, std::size_t cols, std::size_t h,
                                std::size_t w) {
  std::vector<double> out(h * w);
  auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(rows) - 1);
    c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(cols) - 1);
    return grid[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
  };
  const double sy = rows > 1 ? static_cast<double>(rows - 1) / static_cast<double>(std::max<std::size_t>(h - 1, 1)) : 0.0;
  const double sx = cols > 1 ? static_cast<double>(cols - 1) / static_cast<double>(std::max<std::size_t>(w - 1, 1)) : 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) * sy;
    const auto iy = static_cast<std::ptrdiff_t>(std::floor(gy));
    double wy[4];
    cubic_weights(gy - static_cast<double>(iy), wy);
    for (std::size_t x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) * sx;
      const auto ix = static_cast<std::ptrdiff_t>(std::floor(gx));
      double wx[4];
      cubic_weights(gx - static_cast<double>(ix), wx);
      double v = 0.0;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) v += wy[i] * wx[j] * at(iy - 1 + i, ix - 1 + j);
      }
      out[y * w + x] = v;
    }
  }
  return out;
}

struct Warp {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> src_y;  // source coordinate of each output pixel
  std::vector<double> src_x;
};

Warp make_warp(const AugmentDraw& d, std::size_t h, std::size_t w) {
  Warp warp{h, w, std::vector<double>(h * w), std::vector<double>(h * w)};
  std::vector<double> fy, fx;
  if (!d.grid_dy.empty()) {
    fy = dense_field(d.grid_dy, d.grid_rows, d.grid_cols, h, w);
    fx = dense_field(d.grid_dx, d.grid_rows, d.grid_cols, h, w);
  }
  // Forward map A = R(theta) * Shear * scale about the centre; sample with A^-1.
  const double c = std::cos(d.rotation_rad), s = std::sin(d.rotation_rad), k = std::tan(d.shear_rad);
  const double a00 = d.scale * c, a01 = d.scale * (c * k - s);
  const double a10 = d.scale * s, a11 = d.scale * (s * k + c);
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double ox = static_cast<double>(x) - cx, oy = static_cast<double>(y) - cy;
      double sx = i00 * ox + i01 * oy + cx;
      double sy = i10 * ox + i11 * oy + cy;
      if (!fy.empty()) {
        sy += fy[y * w + x];
        sx += fx[y * w + x];
      }
      warp.src_y[y * w + x] = std::clamp(sy, 0.0, static_cast<double>(h) - 1.0);
      warp.src_x[y * w + x] = std::clamp(sx, 0.0, static_cast<double>(w) - 1.0);
    }
  }
  return warp;
}

Image warp_bilinear(const Image& img, const Warp& warp) {
  Image out(img.height, img.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double sy = warp.src_y[i], sx = warp.src_x[i];
    const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
    const double ty = sy - static_cast<double>(y0), tx = sx - static_cast<double>(x0);
    const double v = (1 - ty) * ((1 - tx) * img(y0, x0) + tx * img(y0, x1)) + ty * ((1 - tx) * img(y1, x0) + tx * img(y1, x1));
    out.pixels[i] = static_cast<float>(v);
  }
  return out;
}

InstanceMap warp_nearest(const InstanceMap& labels, const Warp& warp) {
  InstanceMap out(labels.height, labels.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto y = static_cast<std::size_t>(std::lround(warp.src_y[i]));
    const auto x = static_cast<std::size_t>(std::lround(warp.src_x[i]));
    out.pixels[i] = labels(y, x);
  }
  return out;
}

// Nearest-neighbour resampling can detach single edge pixels from a cell.
// Keeps each label's largest 4-connected piece and clears the rest.
void drop_label_fragments(InstanceMap& labels) {
  const std::size_t h = labels.height, w = labels.width;
  std::vector<std::size_t> piece(h * w, 0);
  std::vector<std::size_t> piece_size{0};
  std::map<std::int32_t, std::size_t> best;  // label -> largest piece id
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    const std::int32_t l = labels.pixels[start];
    if (l == 0 || piece[start] != 0) continue;
    const std::size_t id = piece_size.size();
    piece_size.push_back(0);
    piece[start] = id;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++piece_size[id];
      const std::size_t y = i / w, x = i % w;
      const std::size_t nb[4] = {y > 0 ? i - w : i, y + 1 < h ? i + w : i, x > 0 ? i - 1 : i, x + 1 < w ? i + 1 : i};
      for (std::size_t j : nb) {
        if (labels.pixels[j] == l && piece[j] == 0) {
          piece[j] = id;
          stack.push_back(j);
        }
      }
    }
    auto it = best.find(l);
    if (it == best.end() || piece_size[id] > piece_size[it->second]) best[l] = id;
  }
  for (std::size_t i = 0; i < h * w; ++i) {
    if (labels.pixels[i] != 0 && piece[i] != best[labels.pixels[i]]) labels.pixels[i] = 0;
  }
}

}  // namespace

AugmentDraw draw_augmentation(const AugmentSpec& spec, std::size_t height, std::size_t width, std::size_t length,
                              std::size_t min_length, Rng& rng) {
  AugmentDraw d;
  if (spec.flips) {
    d.flip_horizontal = rng.coin();
    d.flip_vertical = rng.coin();
  }
  if (spec.rotate90) {
    // Non-square frames only turn by half turns so every draw keeps the dims.
    d.rot90 = height == width ? static_cast<int>(rng.below(4)) : 2 * static_cast<int>(rng.below(2));
  }
  if (spec.crop_height > 0 || spec.crop_width > 0) {
    const std::size_t ch = spec.crop_height > 0 ? spec.crop_height : height;
    const std::size_t cw = spec.crop_width > 0 ? spec.crop_width : width;
    if (ch > height || cw > width) {
      throw UsageError("crop " + std::to_string(ch) + "x" + std::to_string(cw) + " is larger than the " +
                       std::to_string(height) + "x" + std::to_string(width) + " frames");
    }
    d.crop_height = ch;
    d.crop_width = cw;
    d.crop_y = rng.below(height - ch + 1);
    d.crop_x = rng.below(width - cw + 1);
  }
  if (spec.reverse) d.reverse = rng.coin();
  if (spec.max_temporal_k > 0) {
    std::size_t max_k = 0;
    for (std::size_t k = 1; k <= spec.max_temporal_k; ++k) {
      if ((length + k) / (k + 1) >= std::max<std::size_t>(min_length, 1)) max_k = k;
    }
    d.temporal_k = rng.below(max_k + 1);
  }
  if (spec.affine) {
    constexpr double deg = std::numbers::pi / 180.0;
    d.rotation_rad = rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg) * deg;
    d.scale = rng.uniform(spec.min_scale, spec.max_scale);
    d.shear_rad = rng.uniform(-spec.max_shear_deg, spec.max_shear_deg) * deg;
  }
  if (spec.elastic && spec.elastic_amplitude > 0.0) {
    const std::size_t out_h = d.crop_height > 0 ? d.crop_height : height;
    const std::size_t out_w = d.crop_width > 0 ? d.crop_width : width;
    const std::size_t spacing = std::max<std::size_t>(spec.elastic_spacing, 2);
    d.grid_rows = out_h / spacing + 2;
    d.grid_cols = out_w / spacing + 2;
    for (std::size_t i = 0; i < d.grid_rows * d.grid_cols; ++i) {
      d.grid_dy.push_back(rng.uniform(-spec.elastic_amplitude, spec.elastic_amplitude));
      d.grid_dx.push_back(rng.uniform(-spec.elastic_amplitude, spec.elastic_amplitude));
    }
  }
  return d;
}

LabeledSequence apply_augmentation(const LabeledSequence& seq, const AugmentDraw& d) {
  validate_sequence(seq);
  auto spatial = [&d](auto g) {
    if (d.flip_horizontal) g = flip_horizontal(g);
    if (d.flip_vertical) g = flip_vertical(g);
    if (d.rot90 != 0) g = rotate90(g, d.rot90);
    if (d.crop_height > 0) g = crop(g, d.crop_y, d.crop_x, d.crop_height, d.crop_width);
    return g;
  };
  std::vector<std::size_t> order(seq.length());
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
  if (d.reverse) std::reverse(order.begin(), order.end());
  LabeledSequence out;
  out.name = seq.name;
  std::optional<Warp> warp;
  for (std::size_t i = 0; i < order.size(); i += d.temporal_k + 1) {
    Image f = spatial(seq.frames[order[i]]);
    InstanceMap l = spatial(seq.labels[order[i]]);
    if (d.warps()) {
      if (!warp) warp = make_warp(d, f.height, f.width);
      f = warp_bilinear(f, *warp);
      l = warp_nearest(l, *warp);
      drop_label_fragments(l);
    }
    out.frames.push_back(std::move(f));
    out.labels.push_back(std::move(l));
  }
  return out;
}

LabeledSequence augment(const LabeledSequence& seq, const AugmentSpec& spec, std::uint64_t seed,
                        std::size_t min_length) {
  Rng rng(seed);
  return apply_augmentation(seq, draw_augmentation(spec, seq.height(), seq.width(), seq.length(), min_length, rng));
}

#define ULSTM_INSTANTIATE_GRID_OPS(P)                                                  \
  template Grid<P> flip_horizontal<P>(const Grid<P>&);                                 \
  template Grid<P> flip_vertical<P>(const Grid<P>&);                                   \
  template Grid<P> rotate90<P>(const Grid<P>&, int);                                   \
  template Grid<P> crop<P>(const Grid<P>&, std::size_t, std::size_t, std::size_t, std::size_t);

ULSTM_INSTANTIATE_GRID_OPS(float)
ULSTM_INSTANTIATE_GRID_OPS(std::int32_t)
ULSTM_INSTANTIATE_GRID_OPS(std::uint8_t)

}  // namespace ulstm
