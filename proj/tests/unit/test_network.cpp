#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "ulstm/memory.hpp"
#include "ulstm/network.hpp"
#include "ulstm/ops.hpp"

using namespace ulstm;

namespace {

NetworkConfig tiny(Variant v = Variant::enc_lstm, Ratio width = {1, 16}) {
  NetworkConfig c;
  c.variant = v;
  c.width_multiplier = width;
  return c;
}

template <typename T>
Tensor<T> random_frames(const Shape& d, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t(d);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform());
  return t;
}

template <typename T>
void zero_all(NetworkParams<T>& p) {
  for (auto& np : p.parameters()) np.var->mutable_value().fill(T(0));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST(NetworkConfig, VariantNames) {
  EXPECT_EQ(parse_variant("EncLSTM"), Variant::enc_lstm);
  EXPECT_EQ(parse_variant("dec-lstm"), Variant::dec_lstm);
  EXPECT_EQ(parse_variant("full_lstm"), Variant::full_lstm);
  EXPECT_EQ(variant_name(Variant::dec_lstm), "declstm");
  EXPECT_THROW(parse_variant("bilstm"), UsageError);
}

TEST(NetworkConfig, RatioAndDepths) {
  EXPECT_EQ(Ratio::parse("1/16").den, 16u);
  EXPECT_EQ(Ratio::parse("2").num, 2u);
  EXPECT_THROW(Ratio::parse("0"), UsageError);
  EXPECT_THROW(Ratio::parse("1/x"), UsageError);
  EXPECT_EQ(tiny().depths(), (std::vector<std::size_t>{8, 16, 32, 64}));
  EXPECT_EQ(tiny(Variant::enc_lstm, {1, 8}).depths(), (std::vector<std::size_t>{16, 32, 64, 128}));
  EXPECT_EQ(tiny().spatial_multiple(), 8u);
}

TEST(NetworkConfig, ValidateRejectsBadConfigs) {
  auto c = tiny();
  c.levels = 1;
  c.base_depths = {8};
  c.clstm_kernels = {3};
  EXPECT_THROW(c.validate(), UsageError);
  c = tiny();
  c.base_depths = {8, 16};
  EXPECT_THROW(c.validate(), UsageError);
  c = tiny();
  c.clstm_kernels = {3, 4, 3, 3};
  EXPECT_THROW(c.validate(), UsageError);
  c = tiny();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(NetworkParams, VariantStructure) {
  for (Variant v : {Variant::enc_lstm, Variant::dec_lstm, Variant::full_lstm}) {
    auto p = init_network<float>(tiny(v), 1);
    const bool enc = v != Variant::dec_lstm, dec = v != Variant::enc_lstm;
    ASSERT_EQ(p.encoder.size(), 4u);
    ASSERT_EQ(p.decoder.size(), 3u);
    for (const auto& b : p.encoder) EXPECT_EQ(b.recurrent(), enc);
    for (const auto& b : p.decoder) EXPECT_EQ(b.recurrent(), dec);
    std::size_t lstm_names = 0;
    for (const auto& np : p.parameters()) lstm_names += np.name.find(".lstm.") != std::string::npos;
    EXPECT_EQ(lstm_names, 2 * ((enc ? 4 : 0) + (dec ? 3 : 0)));
    EXPECT_EQ(tiny(v).recurrent_layers(), (enc ? 4u : 0u) + (dec ? 3u : 0u));
    EXPECT_EQ(zero_state<float>(tiny(v), 1, 16, 16).layers.size(), tiny(v).recurrent_layers());
  }
}

TEST(NetworkParams, CountIsPureFunctionOfConfig) {
  auto a = init_network<float>(tiny(), 1);
  auto b = init_network<float>(tiny(), 99);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  auto c = init_network<float>(tiny(Variant::full_lstm), 1);
  EXPECT_NE(a.parameter_count(), c.parameter_count());
  std::set<std::string> names;
  for (const auto& np : a.parameters()) EXPECT_TRUE(names.insert(np.name).second) << np.name;
  EXPECT_EQ(a.parameters().back().name, "head.bias");
}

TEST(NetworkParams, SameSeedSameWeights) {
  auto a = init_network<float>(tiny(), 5);
  auto b = init_network<float>(tiny(), 5);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].var->value(), pb[i].var->value());
}

TEST(NetworkParams, CloneIsDeep) {
  auto a = init_network<float>(tiny(), 2);
  auto b = a.clone();
  b.parameters()[0].var->mutable_value()[0] += 1.f;
  EXPECT_NE(a.parameters()[0].var->value(), b.parameters()[0].var->value());
  b.buffers()[0].tensor->fill(3.f);
  EXPECT_NE(*a.buffers()[0].tensor, *b.buffers()[0].tensor);
}

TEST(Encoder, LevelZeroShapes) {
  auto p = init_network<float>(tiny(), 3);
  const auto x = Var<float>(random_frames<float>({1, 1, 16, 16}, 1));
  const auto out = encoder_apply<float>(0, x, clstm_zero_state<float>(8, 1, 16, 16), p, Mode::eval);
  EXPECT_EQ(out.h.dims(), (Shape{1, 8, 16, 16}));
  EXPECT_EQ(out.pooled.dims(), (Shape{1, 8, 8, 8}));
  ASSERT_TRUE(out.state.has_value());
  const auto deep = encoder_apply<float>(3, Var<float>(Tensor<float>({1, 32, 2, 2}, 0.5f)),
                                         clstm_zero_state<float>(64, 1, 2, 2), p, Mode::eval);
  EXPECT_FALSE(deep.pooled.defined());
}

TEST(Encoder, ZeroParametersGiveZero) {
  auto p = init_network<float>(tiny(), 3);
  zero_all(p);
  const auto out = encoder_apply<float>(0, Var<float>(random_frames<float>({1, 1, 16, 16}, 2)),
                                        clstm_zero_state<float>(8, 1, 16, 16), p, Mode::train);
  for (float v : out.h.value().values()) EXPECT_EQ(v, 0.f);
}

TEST(Encoder, RecurrenceIsActive) {
  auto p = init_network<float>(tiny(), 4);
  const auto x = Var<float>(random_frames<float>({1, 1, 16, 16}, 3));
  std::optional<ClstmState<float>> s = clstm_zero_state<float>(8, 1, 16, 16);
  std::vector<Tensor<float>> hs;
  for (int t = 0; t < 3; ++t) {
    auto out = encoder_apply<float>(0, x, s, p, Mode::eval);
    hs.push_back(out.h.value());
    s = out.state;
  }
  EXPECT_GT(max_abs_diff(hs[0], hs[1]), 0.0);
  EXPECT_GT(max_abs_diff(hs[1], hs[2]), 0.0);
}

TEST(Decoder, Shapes) {
  auto p = init_network<float>(tiny(Variant::enc_lstm, {1, 4}), 5);
  const auto out = decoder_apply<float>(0, Var<float>(Tensor<float>({1, 64, 8, 8}, 0.1f)),
                                        Var<float>(Tensor<float>({1, 32, 16, 16}, 0.2f)), std::nullopt, p, Mode::eval);
  EXPECT_EQ(out.z.dims(), (Shape{1, 32, 16, 16}));
  EXPECT_THROW(decoder_apply<float>(0, Var<float>(Tensor<float>({1, 64, 8, 8})),
                                    Var<float>(Tensor<float>({1, 32, 12, 12})), std::nullopt, p, Mode::eval),
               ShapeError);
}

TEST(Decoder, ZeroParametersGiveZero) {
  for (Variant v : {Variant::enc_lstm, Variant::full_lstm}) {
    auto p = init_network<float>(tiny(v), 6);
    zero_all(p);
    std::optional<ClstmState<float>> s;
    if (v == Variant::full_lstm) s = clstm_zero_state<float>(8, 1, 16, 16);
    const auto out = decoder_apply<float>(0, Var<float>(random_frames<float>({1, 16, 8, 8}, 1)),
                                          Var<float>(random_frames<float>({1, 8, 16, 16}, 2)), s, p, Mode::train);
    for (float x : out.z.value().values()) EXPECT_EQ(x, 0.f);
  }
}

TEST(Decoder, GradientReachesBothPaths) {
  auto p = init_network<double>(tiny(), 7);
  Var<double> y = parameter(random_frames<double>({1, 16, 8, 8}, 3));
  Var<double> skip = parameter(random_frames<double>({1, 8, 16, 16}, 4));
  const auto r = random_frames<double>({1, 8, 16, 16}, 5);
  auto loss = [&] {
    return ops::sum(ops::mul(decoder_apply<double>(0, y, skip, std::nullopt, p, Mode::eval).z, Var<double>(r)));
  };
  {
    Tape<double> tape;
    TapeGuard<double> on(tape);
    tape.backward(loss());
  }
  auto value = [&] {
    NoGradGuard<double> off;
    return loss().value()[0];
  };
  const double fy = oracle::central_difference(value, y.mutable_value()[10]);
  const double fs = oracle::central_difference(value, skip.mutable_value()[20]);
  EXPECT_NE(fy, 0.0);
  EXPECT_NE(fs, 0.0);
  EXPECT_LT(oracle::rel_error(y.grad()[10], fy), 1e-4);
  EXPECT_LT(oracle::rel_error(skip.grad()[20], fs), 1e-4);
}

TEST(ForwardFrame, OutputShapeAndDivisibility) {
  auto p = init_network<float>(tiny(), 8);
  for (std::size_t s : {16u, 24u}) {
    const auto out = forward_frame(Var<float>(random_frames<float>({2, 1, s, s}, s)), zero_state<float>(tiny(), 2, s, s),
                                   p, Mode::eval);
    EXPECT_EQ(out.logits.dims(), (Shape{2, 2, s, s}));
  }
  EXPECT_THROW(forward_frame(Var<float>(random_frames<float>({1, 1, 20, 20}, 1)), zero_state<float>(tiny(), 1, 20, 20),
                             p, Mode::eval),
               ShapeError);
  EXPECT_THROW(forward_frame(Var<float>(random_frames<float>({1, 1, 16, 24}, 1)),
                             zero_state<float>(tiny(), 1, 16, 16), p, Mode::eval),
               std::exception);
}

TEST(ForwardFrame, StateMismatchIsUsageError) {
  auto p = init_network<float>(tiny(), 9);
  EXPECT_THROW(forward_frame(Var<float>(random_frames<float>({1, 1, 16, 16}, 1)),
                             zero_state<float>(tiny(Variant::full_lstm), 1, 16, 16), p, Mode::eval),
               UsageError);
}

TEST(ForwardFrame, IncomingStateMatters) {
  auto p = init_network<float>(tiny(), 10);
  const auto x = Var<float>(random_frames<float>({1, 1, 16, 16}, 2));
  const auto a = forward_frame(x, zero_state<float>(tiny(), 1, 16, 16), p, Mode::eval);
  auto perturbed = zero_state<float>(tiny(), 1, 16, 16);
  for (auto& l : perturbed.layers) {
    for (auto& v : l.h.mutable_value().values()) v = 0.9f;
    for (auto& v : l.c.mutable_value().values()) v = -3.f;
  }
  const auto b = forward_frame(x, perturbed, p, Mode::eval);
  EXPECT_GT(max_abs_diff(a.logits.value(), b.logits.value()), 1e-4);
}

TEST(ForwardSequence, SingleFrameAndDeterminism) {
  auto p = init_network<float>(tiny(Variant::full_lstm), 11);
  auto frames = random_frames<float>({1, 1, 1, 16, 16}, 3);
  const auto seq = forward_sequence(frames, p, Mode::eval);
  Tensor<float> f0 = frames;
  f0.reshape({1, 1, 16, 16});
  const auto single = forward_frame(Var<float>(f0), zero_state<float>(p.config, 1, 16, 16), p, Mode::eval);
  EXPECT_EQ(seq.dims(), (Shape{1, 1, 2, 16, 16}));
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(seq[i], single.logits.value()[i]);

  const auto many = random_frames<float>({5, 2, 1, 16, 16}, 4);
  EXPECT_EQ(forward_sequence(many, p, Mode::eval), forward_sequence(many, p, Mode::eval));
}

TEST(ForwardSequence, FrameOrderMatters) {
  auto p = init_network<float>(tiny(), 12);
  auto frames = random_frames<float>({3, 1, 1, 16, 16}, 5);
  auto swapped = frames;
  const std::size_t plane = 256;
  std::swap_ranges(swapped.data(), swapped.data() + plane, swapped.data() + plane);
  const auto a = forward_sequence(frames, p, Mode::eval);
  const auto b = forward_sequence(swapped, p, Mode::eval);
  // Frame 2 is identical in both orders; only the history differs.
  double diff = 0;
  for (std::size_t i = 2 * 512; i < 3 * 512; ++i) diff = std::max(diff, static_cast<double>(std::abs(a[i] - b[i])));
  EXPECT_GT(diff, 1e-6);
}

TEST(ForwardSequence, ZeroRecurrenceAndMemoryIsFrameLocal) {
  auto p = init_network<double>(tiny(Variant::full_lstm), 13);
  p.zero_recurrent();
  const auto frames = random_frames<double>({4, 1, 1, 16, 16}, 6);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  auto run = [&](const std::vector<std::size_t>& idx) {
    std::vector<Tensor<double>> out;
    for (std::size_t t : idx) {
      Tensor<double> f({1, 1, 16, 16}, std::span<const double>(frames.data() + t * 256, 256));
      out.push_back(forward_frame(Var<double>(f), zero_state<double>(p.config, 1, 16, 16), p, Mode::eval).logits.value());
    }
    return out;
  };
  const auto plain = run({0, 1, 2, 3});
  const auto shuffled = run(order);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_LT(max_abs_diff(plain[order[k]], shuffled[k]), 1e-6);
}

TEST(ForwardSequence, EvalMemoryIndependentOfLength) {
  auto p = init_network<float>(tiny(), 14);
  auto peak_for = [&](std::size_t count) {
    const auto frame = random_frames<float>({1, 1, 32, 32}, 7);
    std::size_t before = MemoryStats::current();
    MemoryStats::reset_peak();
    stream_sequence<float>(count, [&](std::size_t) { return frame; }, p, Mode::eval,
                           [](std::size_t, const Tensor<float>&) {});
    return MemoryStats::peak() - before;
  };
  const std::size_t short_run = peak_for(4);
  const std::size_t long_run = peak_for(64);
  EXPECT_LE(long_run, short_run + short_run / 20);
}

TEST(Probabilities, SoftmaxProperties) {
  Tensor<float> equal({1, 2, 3, 3}, 0.3f);
  const auto half = predict_probabilities(equal);
  for (float v : half.values()) EXPECT_FLOAT_EQ(v, 0.5f);
  auto logits = random_frames<float>({2, 2, 4, 4}, 8);
  const auto p = predict_probabilities(logits);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i) {
      const float a = p[n * 32 + i], b = p[n * 32 + 16 + i];
      EXPECT_NEAR(a + b, 1.0, 1e-6);
      EXPECT_EQ(a > b, logits[n * 32 + i] > logits[n * 32 + 16 + i]);
    }
}

TEST(Segment, BackgroundAndBlobs) {
  Tensor<float> prob({1, 2, 5, 7});
  auto set = [&](std::size_t r, std::size_t c, bool fg) {
    prob.at(0, 0, r, c) = fg ? 0.2f : 0.8f;
    prob.at(0, 1, r, c) = fg ? 0.8f : 0.2f;
  };
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) set(r, c, false);
  EXPECT_EQ(segment(prob).at(0), InstanceMap(5, 7, 0));

  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) set(r, c, c != 3);
  const InstanceMap two = segment(prob).at(0);
  BinaryMap mask(5, 7);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.pixels[i] = two.pixels[i] > 0;
  EXPECT_TRUE(oracle::same_partition(two, oracle::flood_fill(mask, 4)));
  EXPECT_NE(two(0, 0), two(0, 6));
  EXPECT_EQ(two(2, 3), 0);

  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) set(r, c, r >= 1 && r <= 3 && c >= 2);
  const InstanceMap one = segment(prob).at(0);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(one(r, c), (r >= 1 && r <= 3 && c >= 2) ? 1 : 0);
}
