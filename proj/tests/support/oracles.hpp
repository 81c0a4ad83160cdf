#pragma once

// Independent reference implementations used only by tests. None of these
// call into the library's kernels or metric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "ulstm/autograd.hpp"
#include "ulstm/image.hpp"
#include "ulstm/rng.hpp"

namespace oracle {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fully connected LSTM on scalars-per-channel. Weight layout per gate:
// wx[gate][out][in], wh[gate][out][out], b[gate][out]; gates i, f, o, g.
struct ScalarLstm {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<std::vector<std::vector<double>>> wx;  // [4][out][in]
  std::vector<std::vector<std::vector<double>>> wh;  // [4][out][out]
  std::vector<std::vector<double>> b;                // [4][out]

  // Returns (h', c').
  std::pair<std::vector<double>, std::vector<double>> step(const std::vector<double>& x, const std::vector<double>& h,
                                                           const std::vector<double>& c) const {
    std::vector<double> h2(out), c2(out);
    for (std::size_t o = 0; o < out; ++o) {
      double pre[4];
      for (int g = 0; g < 4; ++g) {
        double s = b[g][o];
        for (std::size_t k = 0; k < in; ++k) s += wx[g][o][k] * x[k];
        for (std::size_t k = 0; k < out; ++k) s += wh[g][o][k] * h[k];
        pre[g] = s;
      }
      const double i = sigmoid(pre[0]), f = sigmoid(pre[1]), og = sigmoid(pre[2]), gg = std::tanh(pre[3]);
      c2[o] = f * c[o] + i * gg;
      h2[o] = og * std::tanh(c2[o]);
    }
    return {h2, c2};
  }
};

// Breadth-first flood fill. Labels are arbitrary positive ids.
inline ulstm::InstanceMap flood_fill(const ulstm::BinaryMap& mask, int connectivity) {
  ulstm::InstanceMap out(mask.height, mask.width, 0);
  std::int32_t next = 0;
  const long h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
  for (long r0 = 0; r0 < h; ++r0) {
    for (long c0 = 0; c0 < w; ++c0) {
      if (!mask(r0, c0) || out(r0, c0)) continue;
      ++next;
      std::vector<std::pair<long, long>> frontier{{r0, c0}};
      out(r0, c0) = next;
      for (std::size_t k = 0; k < frontier.size(); ++k) {
        const auto [r, c] = frontier[k];
        for (long dr = -1; dr <= 1; ++dr) {
          for (long dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (connectivity == 4 && dr != 0 && dc != 0) continue;
            const long rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
            if (mask(rr, cc) && !out(rr, cc)) {
              out(rr, cc) = next;
              frontier.push_back({rr, cc});
            }
          }
        }
      }
    }
  }
  return out;
}

// True when a and b induce the same partition (equal up to renaming).
inline bool same_partition(const ulstm::InstanceMap& a, const ulstm::InstanceMap& b) {
  if (!a.same_dims(b)) return false;
  std::map<std::int32_t, std::int32_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a.pixels[i], y = b.pixels[i];
    if ((x == 0) != (y == 0)) return false;
    if (x == 0) continue;
    if (auto it = ab.find(x); it != ab.end() && it->second != y) return false;
    if (auto it = ba.find(y); it != ba.end() && it->second != x) return false;
    ab[x] = y;
    ba[y] = x;
  }
  return true;
}

// SEG by enumerating every (gt, pred) label pair. Returns per-cell scores in
// ascending gt label order.
inline std::vector<double> seg_scores(const ulstm::InstanceMap& gt, const ulstm::InstanceMap& pred) {
  std::set<std::int32_t> gl, pl;
  for (auto v : gt.pixels) if (v > 0) gl.insert(v);
  for (auto v : pred.pixels) if (v > 0) pl.insert(v);
  std::vector<double> out;
  for (auto g : gl) {
    double score = 0.0;
    for (auto p : pl) {
      std::size_t inter = 0, a = 0, uni = 0;
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool ina = gt.pixels[i] == g, inb = pred.pixels[i] == p;
        a += ina;
        inter += ina && inb;
        uni += ina || inb;
      }
      if (2 * inter > a) score = static_cast<double>(inter) / static_cast<double>(uni);
    }
    out.push_back(score);
  }
  return out;
}

// Distance from (r, c) to the nearest pixel of `label`, by exhaustive search.
inline double brute_distance(const ulstm::InstanceMap& labels, std::int32_t label, long r, long c) {
  double best = std::numeric_limits<double>::infinity();
  for (long rr = 0; rr < static_cast<long>(labels.height); ++rr) {
    for (long cc = 0; cc < static_cast<long>(labels.width); ++cc) {
      if (labels(rr, cc) != label) continue;
      best = std::min(best, std::hypot(static_cast<double>(rr - r), static_cast<double>(cc - c)));
    }
  }
  return best;
}

// Central finite difference of a scalar loss with respect to one entry.
inline double central_difference(const std::function<double()>& loss, double& entry, double step = 1e-6) {
  const double saved = entry;
  entry = saved + step;
  const double up = loss();
  entry = saved - step;
  const double down = loss();
  entry = saved;
  return (up - down) / (2.0 * step);
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Random binary map of blobs: a few seeded rectangles plus salt noise.
inline ulstm::BinaryMap random_blobs(ulstm::Rng& rng, std::size_t h, std::size_t w, double noise = 0.05) {
  ulstm::BinaryMap m(h, w, 0);
  const std::size_t blobs = 1 + rng.below(5);
  for (std::size_t b = 0; b < blobs; ++b) {
    const std::size_t bh = 1 + rng.below(6), bw = 1 + rng.below(6);
    const std::size_t y = rng.below(h - bh + 1), x = rng.below(w - bw + 1);
    for (std::size_t r = y; r < y + bh; ++r)
      for (std::size_t c = x; c < x + bw; ++c) m(r, c) = 1;
  }
  for (auto& v : m.pixels)
    if (rng.coin(noise)) v = static_cast<std::uint8_t>(1 - v);
  return m;
}

// Ground truth and a perturbed prediction, both labelled by flood fill with
// shuffled ids so label order carries no information.
inline std::pair<ulstm::InstanceMap, ulstm::InstanceMap> random_seg_pair(ulstm::Rng& rng, std::size_t size = 16) {
  const ulstm::BinaryMap gt_mask = random_blobs(rng, size, size);
  ulstm::BinaryMap pred_mask = gt_mask;
  const double flip = rng.uniform(0.0, 0.3);
  for (auto& v : pred_mask.pixels)
    if (rng.coin(flip)) v = static_cast<std::uint8_t>(1 - v);
  auto relabel = [&](ulstm::InstanceMap m) {
    std::int32_t top = 0;
    for (auto v : m.pixels) top = std::max(top, v);
    std::vector<std::int32_t> ids(static_cast<std::size_t>(top) + 1);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int32_t>(i);
    for (std::size_t i = ids.size(); i > 2; --i) std::swap(ids[i - 1], ids[1 + rng.below(i - 1)]);
    for (auto& v : m.pixels) v = ids[static_cast<std::size_t>(v)];
    return m;
  };
  return {relabel(flood_fill(gt_mask, 4)), relabel(flood_fill(pred_mask, 4))};
}

}  // namespace oracle
