#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <array>

#include "oracles.hpp"
#include "ulstm/loss.hpp"
#include "ulstm/ops.hpp"
#include "ulstm/rng.hpp"

using namespace ulstm;

namespace {

// Non-overlapping random discs, at least `gap` pixels apart.
InstanceMap random_cells(std::size_t h, std::size_t w, int cells, Rng& rng, double gap = 2.0) {
  InstanceMap m(h, w, 0);
  std::vector<std::array<double, 3>> placed;
  int attempts = 0;
  while (static_cast<int>(placed.size()) < cells && attempts++ < 10000) {
    const double r = 1.0 + 3.0 * rng.uniform();
    const double cy = rng.uniform(0, static_cast<double>(h)), cx = rng.uniform(0, static_cast<double>(w));
    bool ok = true;
    for (const auto& p : placed) ok = ok && std::hypot(cy - p[0], cx - p[1]) > r + p[2] + gap;
    if (!ok) continue;
    placed.push_back({cy, cx, r});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (std::hypot(y - cy, x - cx) <= r) m(y, x) = static_cast<std::int32_t>(placed.size());
  }
  // Discs clipped to nothing by the border leave gaps in the label range;
  // relabel densely.
  std::map<std::int32_t, std::int32_t> dense;
  for (auto& v : m.pixels)
    if (v > 0) v = dense.emplace(v, static_cast<std::int32_t>(dense.size() + 1)).first->second;
  return m;
}

// d1 <= d2 to distinct cells by exhaustive search.
std::pair<double, double> two_nearest(const InstanceMap& m, long r, long c) {
  std::int32_t maxl = 0;
  for (auto v : m.pixels) maxl = std::max(maxl, v);
  double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
  for (std::int32_t l = 1; l <= maxl; ++l) {
    const double d = oracle::brute_distance(m, l, r, c);
    if (d < d1) {
      d2 = d1;
      d1 = d;
    } else if (d < d2) {
      d2 = d;
    }
  }
  return {d1, d2};
}

}  // namespace

TEST(DistanceTransform, MatchesBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 5 + rng.below(20), w = 5 + rng.below(20);
    BinaryMap seeds(h, w, 0);
    InstanceMap as_label(h, w, 0);
    const double density = 0.02 + 0.2 * rng.uniform();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      seeds.pixels[i] = rng.uniform() < density;
      as_label.pixels[i] = seeds.pixels[i];
    }
    const auto d = distance_transform(seeds);
    for (long r = 0; r < static_cast<long>(h); ++r)
      for (long c = 0; c < static_cast<long>(w); ++c) {
        const double expect = oracle::brute_distance(as_label, 1, r, c);
        if (std::isinf(expect)) {
          EXPECT_TRUE(std::isinf(d(r, c)));
        } else {
          ASSERT_NEAR(d(r, c), expect, 1e-9);
        }
      }
  }
}

TEST(WeightMap, EmptyIsBackgroundWeight) {
  WeightMapParams p;
  p.wc_background = 0.7;
  const auto w = compute_weight_map(InstanceMap(6, 9, 0), p);
  for (float v : w.pixels) EXPECT_FLOAT_EQ(v, 0.7f);
}

TEST(WeightMap, SingleCellHasClassWeightsOnly) {
  InstanceMap m(8, 8, 0);
  m(3, 3) = m(3, 4) = 1;
  WeightMapParams p{10.0, 5.0, 0.5, 1.5};
  const auto w = compute_weight_map(m, p);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_FLOAT_EQ(w.pixels[i], m.pixels[i] ? 1.5f : 0.5f);
}

TEST(WeightMap, TwoPixelMidpointClosedForm) {
  InstanceMap m(9, 11, 0);
  m(4, 3) = 1;
  m(4, 7) = 2;
  WeightMapParams p;
  p.wc_background = 0.8;
  const auto w = compute_weight_map(m, p);
  EXPECT_NEAR(w(4, 5), 0.8 + 10.0 * std::exp(-16.0 / 50.0), 1e-4);
  EXPECT_NEAR(10.0 * std::exp(-0.32), 7.2615, 1e-4);
}

TEST(WeightMap, MatchesFormulaWithBruteForceDistances) {
  Rng rng(2);
  WeightMapParams p{10.0, 5.0, 0.6, 1.4};
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = random_cells(16, 18, 3, rng);
    const auto w = compute_weight_map(m, p);
    for (long r = 0; r < 16; ++r)
      for (long c = 0; c < 18; ++c) {
        const auto [d1, d2] = two_nearest(m, r, c);
        double expect = m(r, c) ? p.wc_foreground : p.wc_background;
        if (std::isfinite(d2)) expect += p.w0 * std::exp(-(d1 + d2) * (d1 + d2) / (2 * p.sigma * p.sigma));
        ASSERT_NEAR(w(r, c), expect, 1e-4);
      }
  }
}

// d1 + d2 is constant along every shortest segment between the two cells,
// so the continuum maximiser is a segment that crosses the bisector at its
// midpoint. On the pixel grid that midpoint is a pixel centre only when the
// closest pair has an even offset; layouts are drawn from that class.
TEST(WeightMap, ArgmaxReachesEquidistantRidge) {
  Rng rng(3);
  WeightMapParams p;
  int accepted = 0, drawn = 0;
  while (accepted < 50) {
    ++drawn;
    const auto m = random_cells(24, 24, 2, rng, 3.0);
    std::vector<std::pair<long, long>> a, b;
    for (long r = 0; r < 24; ++r)
      for (long c = 0; c < 24; ++c) {
        if (m(r, c) == 1) a.push_back({r, c});
        if (m(r, c) == 2) b.push_back({r, c});
      }
    if (a.empty() || b.empty()) continue;
    long best_sq = std::numeric_limits<long>::max();
    for (auto [ar, ac] : a)
      for (auto [br, bc] : b) best_sq = std::min(best_sq, (ar - br) * (ar - br) + (ac - bc) * (ac - bc));
    std::optional<std::pair<long, long>> mid;
    for (auto [ar, ac] : a)
      for (auto [br, bc] : b)
        if (!mid && (ar - br) * (ar - br) + (ac - bc) * (ac - bc) == best_sq && (ar - br) % 2 == 0 &&
            (ac - bc) % 2 == 0)
          mid = std::make_pair((ar + br) / 2, (ac + bc) / 2);
    if (!mid) continue;
    ++accepted;

    const auto w = compute_weight_map(m, p);
    float best = -1.f;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (!m.pixels[i]) best = std::max(best, w.pixels[i]);
    const auto [mr, mc] = *mid;
    ASSERT_EQ(m(mr, mc), 0);
    EXPECT_NEAR(oracle::brute_distance(m, 1, mr, mc), oracle::brute_distance(m, 2, mr, mc), 1e-12);
    EXPECT_NEAR(w(mr, mc), best, 1e-5) << "layout " << accepted;
    const double d = std::sqrt(static_cast<double>(best_sq));
    EXPECT_NEAR(best, p.wc_background + p.w0 * std::exp(-d * d / (2 * p.sigma * p.sigma)), 1e-4);
  }
  RecordProperty("layouts_drawn", drawn);
}

TEST(WeightMap, PositiveAndTranslationEquivariant) {
  Rng rng(4);
  WeightMapParams p{10.0, 5.0, 0.3, 1.7};
  InstanceMap m(32, 32, 0);
  const auto small = random_cells(20, 20, 3, rng);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 20; ++x) m(y + 4, x + 4) = small(y, x);
  InstanceMap shifted(32, 32, 0);
  for (std::size_t y = 0; y + 3 < 32; ++y)
    for (std::size_t x = 0; x + 5 < 32; ++x) shifted(y + 3, x + 5) = m(y, x);
  const auto w = compute_weight_map(m, p), ws = compute_weight_map(shifted, p);
  for (float v : w.pixels) EXPECT_GE(v, 0.3f);
  for (std::size_t y = 4; y < 24; ++y)
    for (std::size_t x = 4; x < 24; ++x) EXPECT_NEAR(w(y, x), ws(y + 3, x + 5), 1e-5);
}

TEST(WeightMap, NonPositiveSigmaRejected) {
  WeightMapParams p;
  p.sigma = 0.0;
  EXPECT_THROW(compute_weight_map(InstanceMap(4, 4, 0), p), UsageError);
}

TEST(ClassBalance, InverseFrequencySumsToTwo) {
  InstanceMap m(4, 4, 0);
  m(0, 0) = m(0, 1) = m(1, 0) = m(1, 1) = 1;  // 4 fg, 12 bg
  const auto [bg, fg] = class_balance_weights({m});
  EXPECT_NEAR(bg + fg, 2.0, 1e-12);
  EXPECT_NEAR(fg / bg, 3.0, 1e-12);
  const auto [b2, f2] = class_balance_weights({InstanceMap(3, 3, 0)});
  EXPECT_EQ(b2, 1.0);
  EXPECT_EQ(f2, 1.0);
}

TEST(CrossEntropy, UniformLogitsGiveLn2) {
  Tensor<double> logits({2, 2, 4, 4}, 0.0), target({2, 4, 4}), weights({2, 4, 4}, 1.0);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = static_cast<double>(i % 2);
  EXPECT_NEAR(weighted_cross_entropy(Var<double>(logits), target, weights).value()[0], std::log(2.0), 1e-6);
  Tensor<float> lf({1, 2, 3, 3}, 0.f), tf({1, 3, 3}, 1.f), wf({1, 3, 3}, 2.5f);
  EXPECT_NEAR(weighted_cross_entropy(Var<float>(lf), tf, wf).value()[0], std::log(2.0), 1e-6);
}

TEST(CrossEntropy, PerfectLogitsNearZero) {
  Tensor<double> logits({1, 2, 3, 3}), target({1, 3, 3}), weights({1, 3, 3}, 1.0);
  for (std::size_t i = 0; i < 9; ++i) {
    target[i] = static_cast<double>(i % 3 == 0);
    logits[i] = target[i] ? -20.0 : 20.0;
    logits[9 + i] = -logits[i];
  }
  const double l = weighted_cross_entropy(Var<double>(logits), target, weights).value()[0];
  EXPECT_LT(l, 1e-3);
  EXPECT_GE(l, 0.0);
}

TEST(CrossEntropy, DoublingWeightsChangesNothing) {
  Rng rng(5);
  Tensor<double> logits({2, 2, 3, 3}), target({2, 3, 3}), weights({2, 3, 3});
  for (auto& v : logits.values()) v = rng.normal();
  for (auto& v : target.values()) v = static_cast<double>(rng.below(2));
  for (auto& v : weights.values()) v = 0.5 + rng.uniform();
  Tensor<double> doubled = weights;
  for (auto& v : doubled.values()) v *= 2.0;
  auto run = [&](const Tensor<double>& w) {
    Var<double> x = parameter(logits);
    Tape<double> tape;
    TapeGuard<double> on(tape);
    const auto l = weighted_cross_entropy(x, target, w);
    tape.backward(l);
    return std::make_pair(l.value()[0], x.grad());
  };
  const auto [l1, g1] = run(weights);
  const auto [l2, g2] = run(doubled);
  EXPECT_NEAR(l1, l2, 1e-12);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g2[i], 1e-12);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  Var<double> x = parameter(Tensor<double>({2, 2, 3, 3}));
  for (auto& v : x.mutable_value().values()) v = 2 * rng.normal();
  Tensor<double> target({2, 3, 3}), weights({2, 3, 3});
  for (auto& v : target.values()) v = static_cast<double>(rng.below(2));
  for (auto& v : weights.values()) v = 1.0 + 9.0 * rng.uniform();
  {
    Tape<double> tape;
    TapeGuard<double> on(tape);
    tape.backward(weighted_cross_entropy(x, target, weights));
  }
  auto value = [&] { return weighted_cross_entropy(Var<double>(x.value()), target, weights).value()[0]; };
  for (std::size_t i = 0; i < x.value().size(); ++i) {
    EXPECT_LT(oracle::rel_error(x.grad()[i], oracle::central_difference(value, x.mutable_value()[i])), 1e-4);
  }
}

TEST(CrossEntropy, NanLogitsRejected) {
  Tensor<float> logits({1, 2, 2, 2}, 0.f), target({1, 2, 2}, 0.f), weights({1, 2, 2}, 1.f);
  logits[3] = NAN;
  EXPECT_THROW(weighted_cross_entropy(Var<float>(logits), target, weights), NumericError);
}

TEST(Targets, ClassAndWeightTensors) {
  InstanceMap a(2, 3, 0), b(2, 3, 0);
  a(0, 1) = 4;
  b(1, 2) = 1;
  const auto t = class_targets<float>({&a, &b});
  EXPECT_EQ(t.dims(), (Shape{2, 2, 3}));
  EXPECT_EQ(t[1], 1.f);
  EXPECT_EQ(t[6 + 5], 1.f);
  EXPECT_EQ(t[0], 0.f);
  WeightMap wa(2, 3, 2.f), wb(2, 3, 3.f);
  const auto w = weight_tensor<float>({&wa, &wb});
  EXPECT_EQ(w[0], 2.f);
  EXPECT_EQ(w[6], 3.f);
}
