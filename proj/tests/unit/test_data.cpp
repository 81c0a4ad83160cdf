#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "scratch.hpp"
#include "ulstm/augment.hpp"
#include "ulstm/data.hpp"
#include "ulstm/metrics.hpp"
#include "ulstm/synth.hpp"

using namespace ulstm;
namespace fs = std::filesystem;

namespace {

// Frames encode their index in pixel (0,0) and a gradient elsewhere; labels
// are a few rectangles.
LabeledSequence marked_sequence(std::size_t frames, std::size_t h = 16, std::size_t w = 24) {
  LabeledSequence s;
  s.name = "m";
  for (std::size_t t = 0; t < frames; ++t) {
    Image f(h, w);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) f(r, c) = static_cast<float>(r * w + c) / static_cast<float>(h * w);
    f(0, 0) = static_cast<float>(t) / 100.0f;
    InstanceMap l(h, w, 0);
    for (std::size_t r = 2; r < 6; ++r)
      for (std::size_t c = 3 + t % 3; c < 9; ++c) l(r, c) = 1;
    for (std::size_t r = 9; r < 14; ++r)
      for (std::size_t c = 12; c < 20; ++c) l(r, c) = 2;
    s.frames.push_back(f);
    s.labels.push_back(l);
  }
  return s;
}

bool same_sequence(const LabeledSequence& a, const LabeledSequence& b) {
  return a.frames == b.frames && a.labels == b.labels;
}

std::set<std::int32_t> label_set(const InstanceMap& m) {
  std::set<std::int32_t> s;
  for (auto v : m.pixels)
    if (v > 0) s.insert(v);
  return s;
}

std::size_t foreground_count(const InstanceMap& m) {
  return static_cast<std::size_t>(std::count_if(m.pixels.begin(), m.pixels.end(), [](auto v) { return v > 0; }));
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

}  // namespace

TEST(Pgm, EightBitRoundTrip) {
  const auto dir = scratch::dir();
  PgmImage img{2, 3, 255, {0, 1, 2, 128, 254, 255}};
  write_pgm(dir / "a.pgm", img);
  const auto bytes = scratch::bytes(dir / "a.pgm");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 11), "P5\n3 2\n255\n");
  EXPECT_EQ(bytes.size(), 11u + 6u);
  const PgmImage back = read_pgm(dir / "a.pgm");
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(back.maxval, 255u);
}

TEST(Pgm, SixteenBitIsBigEndian) {
  const auto dir = scratch::dir();
  write_pgm(dir / "a.pgm", PgmImage{1, 2, 65535, {0x0102, 65535}});
  const auto bytes = scratch::bytes(dir / "a.pgm");
  const std::string header = "P5\n2 1\n65535\n";
  ASSERT_EQ(bytes.size(), header.size() + 4);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size()]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 0x02);
  EXPECT_EQ(read_pgm(dir / "a.pgm").pixels, (std::vector<std::uint16_t>{0x0102, 65535}));
}

TEST(Pgm, HeaderCommentsAccepted) {
  const auto dir = scratch::dir();
  write_bytes(dir / "c.pgm", std::string("P5\n# note\n2 1\n# more\n255\n") + char(7) + char(9));
  EXPECT_EQ(read_pgm(dir / "c.pgm").pixels, (std::vector<std::uint16_t>{7, 9}));
}

TEST(Pgm, MalformedFilesAreFormatErrors) {
  const auto dir = scratch::dir();
  write_bytes(dir / "p2.pgm", "P2\n1 1\n255\n0\n");
  EXPECT_THROW(read_pgm(dir / "p2.pgm"), FormatError);
  write_bytes(dir / "short.pgm", std::string("P5\n4 1\n255\n") + "ab");
  EXPECT_THROW(read_pgm(dir / "short.pgm"), FormatError);
  write_bytes(dir / "over.pgm", std::string("P5\n1 1\n10\n") + char(11));
  EXPECT_THROW(read_pgm(dir / "over.pgm"), FormatError);
  EXPECT_THROW(read_pgm(dir / "none.pgm"), LoadError);
}

TEST(LoadSequence, ThreeFramesAligned) {
  const auto dir = scratch::dir();
  LabeledSequence s = marked_sequence(3);
  s.name = "01";
  write_sequence(dir, s);
  EXPECT_TRUE(fs::exists(dir / "01" / "t002.pgm"));
  EXPECT_TRUE(fs::exists(dir / "01_GT" / "man_seg002.pgm"));
  const LabeledSequence back = load_sequence(dir / "01");
  ASSERT_EQ(back.length(), 3u);
  EXPECT_EQ(back.name, "01");
  EXPECT_EQ(back.labels, s.labels);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < s.frames[t].size(); ++i)
      EXPECT_NEAR(back.frames[t].pixels[i], s.frames[t].pixels[i], 1.0 / 65535.0);
  const auto all = load_dataset(dir);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].labels, s.labels);
}

TEST(LoadSequence, SixteenBitMaxNormalisesToOne) {
  const auto dir = scratch::dir();
  fs::create_directories(dir / "s");
  write_pgm(dir / "s" / "t000.pgm", PgmImage{1, 2, 65535, {65535, 0}});
  write_pgm(dir / "s" / "man_seg000.pgm", PgmImage{1, 2, 65535, {1, 0}});
  const LabeledSequence seq = load_sequence(dir / "s");
  EXPECT_EQ(seq.frames[0].pixels[0], 1.0f);
  EXPECT_EQ(seq.frames[0].pixels[1], 0.0f);
}

TEST(LoadSequence, MissingLabelNamesTheFile) {
  const auto dir = scratch::dir();
  write_sequence(dir, marked_sequence(3));
  fs::remove(dir / "m_GT" / "man_seg001.pgm");
  try {
    load_sequence(dir / "m");
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("man_seg001.pgm"), std::string::npos) << e.what();
  }
}

TEST(LoadSequence, DimensionMismatchIsLoadError) {
  const auto dir = scratch::dir();
  write_sequence(dir, marked_sequence(2));
  write_pgm(dir / "m_GT" / "man_seg001.pgm", PgmImage{2, 2, 255, {0, 0, 0, 0}});
  EXPECT_THROW(load_sequence(dir / "m"), LoadError);
  write_pgm(dir / "m_GT" / "man_seg001.pgm", to_pgm(marked_sequence(2).labels[1]));
  write_pgm(dir / "m" / "t001.pgm", PgmImage{2, 2, 255, {0, 0, 0, 0}});
  EXPECT_THROW(load_sequence(dir / "m"), LoadError);
  EXPECT_THROW(load_sequence(dir / "absent"), LoadError);
}

TEST(Augment, IdentitySpecReturnsInput) {
  const LabeledSequence s = marked_sequence(7);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_TRUE(same_sequence(augment(s, AugmentSpec::identity(), seed), s));
  }
}

TEST(Augment, FlipsAreInvolutions) {
  const LabeledSequence s = marked_sequence(3);
  AugmentDraw d;
  d.flip_horizontal = true;
  const LabeledSequence once = apply_augmentation(s, d);
  EXPECT_FALSE(same_sequence(once, s));
  EXPECT_EQ(once.frames[0](3, 0), s.frames[0](3, 23));
  EXPECT_TRUE(same_sequence(apply_augmentation(once, d), s));
  d = AugmentDraw{};
  d.flip_vertical = true;
  EXPECT_TRUE(same_sequence(apply_augmentation(apply_augmentation(s, d), d), s));
}

TEST(Augment, FourQuarterTurnsAreIdentity) {
  const LabeledSequence s = marked_sequence(2);
  const Image& f = s.frames[1];
  const Image r1 = rotate90(f, 1);
  EXPECT_EQ(r1.height, f.width);
  EXPECT_EQ(r1.width, f.height);
  // Counter-clockwise: the top-right corner moves to the top-left.
  EXPECT_EQ(r1(0, 0), f(0, f.width - 1));
  EXPECT_EQ(rotate90(rotate90(rotate90(r1, 1), 1), 1), f);
  EXPECT_EQ(rotate90(f, 4), f);
  EXPECT_EQ(rotate90(f, -1), rotate90(f, 3));
  AugmentDraw d;
  d.rot90 = 1;
  LabeledSequence x = s;
  for (int i = 0; i < 4; ++i) x = apply_augmentation(x, d);
  EXPECT_TRUE(same_sequence(x, s));
}

TEST(Augment, ReverseTwiceIsIdentity) {
  const LabeledSequence s = marked_sequence(5);
  AugmentDraw d;
  d.reverse = true;
  const LabeledSequence r = apply_augmentation(s, d);
  EXPECT_EQ(r.frames[0], s.frames[4]);
  EXPECT_EQ(r.labels[0], s.labels[4]);
  EXPECT_TRUE(same_sequence(apply_augmentation(r, d), s));
}

TEST(Augment, StrideTwoKeepsEvenFrames) {
  const LabeledSequence s = marked_sequence(10);
  AugmentDraw d;
  d.temporal_k = 1;
  const LabeledSequence r = apply_augmentation(s, d);
  ASSERT_EQ(r.length(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_FLOAT_EQ(r.frames[i](0, 0), static_cast<float>(2 * i) / 100.0f);
    EXPECT_EQ(r.labels[i], s.labels[2 * i]);
  }
}

TEST(Augment, StrideIsCappedToKeepMinimumLength) {
  AugmentSpec spec = AugmentSpec::identity();
  spec.max_temporal_k = 4;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const AugmentDraw d = draw_augmentation(spec, 16, 16, 10, 5, rng);
    EXPECT_LE(d.temporal_k, 1u);
    EXPECT_GE(apply_augmentation(marked_sequence(10), d).length(), 5u);
  }
}

TEST(Augment, CropSelectsWindowAndRejectsOversize) {
  const LabeledSequence s = marked_sequence(2);
  AugmentDraw d;
  d.crop_y = 3;
  d.crop_x = 5;
  d.crop_height = 8;
  d.crop_width = 8;
  const LabeledSequence c = apply_augmentation(s, d);
  EXPECT_EQ(c.height(), 8u);
  EXPECT_EQ(c.frames[1](0, 0), s.frames[1](3, 5));
  EXPECT_EQ(c.labels[1](7, 7), s.labels[1](10, 12));
  AugmentSpec spec = AugmentSpec::identity();
  spec.crop_height = 32;
  spec.crop_width = 8;
  EXPECT_THROW(augment(s, spec, 1), UsageError);
}

TEST(Augment, LabelsFollowFramesUnderEveryTransform) {
  // Frames carry their label as gray value, so any transform applied to both
  // must keep them in agreement. Where bilinear blending leaves a pure code
  // value the nearest-neighbour label must carry that code; the only allowed
  // exception is a detached label fragment cleared to background.
  LabeledSequence s = marked_sequence(8, 32, 32);
  for (std::size_t t = 0; t < s.length(); ++t)
    for (std::size_t i = 0; i < s.frames[t].size(); ++i)
      s.frames[t].pixels[i] = 0.3f * static_cast<float>(s.labels[t].pixels[i]);
  for (bool warps : {false, true}) {
    AugmentSpec spec;
    spec.affine = spec.elastic = warps;
    spec.crop_height = spec.crop_width = 24;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const LabeledSequence a = augment(s, spec, seed, 2);
      ASSERT_EQ(a.frames.size(), a.labels.size());
      std::size_t checked = 0, cleared = 0;
      for (std::size_t t = 0; t < a.length(); ++t) {
        for (std::size_t i = 0; i < a.frames[t].size(); ++i) {
          const float v = a.frames[t].pixels[i];
          for (int code = 0; code <= 2; ++code) {
            if (std::abs(v - 0.3f * static_cast<float>(code)) > 1e-6f) continue;
            ++checked;
            if (a.labels[t].pixels[i] == 0 && code != 0) {
              ++cleared;
            } else {
              EXPECT_EQ(a.labels[t].pixels[i], code) << "seed " << seed;
            }
          }
        }
      }
      EXPECT_GT(checked, a.length() * 24 * 24 / 2);
      if (!warps) EXPECT_EQ(cleared, 0u);
      EXPECT_LE(cleared, checked / 200) << "seed " << seed;
    }
  }
}

TEST(Augment, OneParameterSetPerSequence) {
  LabeledSequence s = marked_sequence(6, 32, 32);
  for (std::size_t t = 1; t < s.length(); ++t) {
    s.frames[t] = s.frames[0];
    s.labels[t] = s.labels[0];
  }
  AugmentSpec spec;
  spec.crop_height = spec.crop_width = 24;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LabeledSequence a = augment(s, spec, seed, 2);
    for (std::size_t t = 1; t < a.length(); ++t) {
      EXPECT_EQ(a.frames[t], a.frames[0]);
      EXPECT_EQ(a.labels[t], a.labels[0]);
    }
  }
}

TEST(Augment, GrayValuesUntouchedWithoutWarp) {
  const LabeledSequence s = marked_sequence(4);
  AugmentSpec spec = AugmentSpec::identity();
  spec.flips = spec.rotate90 = spec.reverse = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LabeledSequence a = augment(s, spec, seed);
    std::multiset<float> before, after;
    for (const auto& f : s.frames) before.insert(f.pixels.begin(), f.pixels.end());
    for (const auto& f : a.frames) after.insert(f.pixels.begin(), f.pixels.end());
    EXPECT_EQ(before, after);
  }
}

TEST(Augment, ElasticWarpPreservesLabelTopology) {
  SynthSpec spec;
  spec.frames = 3;
  AugmentSpec aug = AugmentSpec::identity();
  aug.elastic = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const LabeledSequence s = synth_generate(spec, seed).sequence;
    const LabeledSequence a = augment(s, aug, 100 + seed);
    for (std::size_t t = 0; t < s.length(); ++t) {
      EXPECT_EQ(label_set(a.labels[t]), label_set(s.labels[t])) << "seed " << seed;
      EXPECT_TRUE(is_valid_instance_map(a.labels[t])) << "seed " << seed;
    }
  }
}

TEST(Synth, DeterministicPerSeed) {
  SynthSpec spec;
  spec.scenario = Scenario::mixed;
  const SynthSequence a = synth_generate(spec, 7), b = synth_generate(spec, 7), c = synth_generate(spec, 8);
  EXPECT_TRUE(same_sequence(a.sequence, b.sequence));
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events[i].frame, b.events[i].frame);
    EXPECT_EQ(a.events[i].kind, b.events[i].kind);
    EXPECT_EQ(a.events[i].params, b.events[i].params);
  }
  EXPECT_FALSE(same_sequence(a.sequence, c.sequence));
}

TEST(Synth, StaticNoiselessCellGivesIdenticalFrames) {
  SynthSpec spec;
  spec.cells = 1;
  spec.max_speed = 0.0;
  spec.noise = 0.0;
  spec.frames = 5;
  const LabeledSequence s = synth_generate(spec, 3).sequence;
  for (std::size_t t = 1; t < s.length(); ++t) {
    EXPECT_EQ(s.frames[t], s.frames[0]);
    EXPECT_EQ(s.labels[t], s.labels[0]);
  }
  EXPECT_EQ(label_set(s.labels[0]).size(), 1u);
}

TEST(Synth, OutputsAreValidSequences) {
  for (Scenario sc : {Scenario::basic, Scenario::touching, Scenario::vanishing, Scenario::mixed}) {
    SynthSpec spec;
    spec.scenario = sc;
    const LabeledSequence s = synth_generate(spec, 21).sequence;
    EXPECT_EQ(s.length(), 20u);
    for (std::size_t t = 0; t < s.length(); ++t) {
      EXPECT_TRUE(is_valid_instance_map(s.labels[t])) << scenario_name(sc) << " frame " << t;
      for (float v : s.frames[t].pixels) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
    }
  }
}

TEST(Synth, TouchingCellsStayDistinct) {
  SynthSpec spec;
  spec.scenario = Scenario::touching;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SynthSequence s = synth_generate(spec, seed);
    const auto touch = std::find_if(s.events.begin(), s.events.end(), [](const SceneEvent& e) { return e.kind == "touch"; });
    ASSERT_NE(touch, s.events.end());
    const std::int32_t a = touch->cell, b = static_cast<std::int32_t>(touch->params.at(0));
    EXPECT_EQ(touch->frame, 5u);
    for (std::size_t t = 0; t < s.sequence.length(); ++t) {
      const InstanceMap& l = s.sequence.labels[t];
      EXPECT_TRUE(label_set(l).count(a) && label_set(l).count(b));
      EXPECT_TRUE(is_valid_instance_map(l));
    }
    // At the contact frame the cells meet in the image, while the labels keep
    // a one-pixel background seam between them.
    const InstanceMap& l = s.sequence.labels[touch->frame];
    const Image& f = s.sequence.frames[touch->frame];
    bool adjacent = false;
    for (std::size_t r = 1; r + 1 < l.height; ++r)
      for (std::size_t c = 1; c + 1 < l.width; ++c) {
        if (l(r, c) != 0 || f(r, c) < spec.background + 0.1) continue;
        auto pair = [&](std::int32_t p, std::int32_t q) { return (p == a && q == b) || (p == b && q == a); };
        adjacent |= pair(l(r, c - 1), l(r, c + 1)) || pair(l(r - 1, c), l(r + 1, c));
      }
    EXPECT_TRUE(adjacent) << "seed " << seed;
  }
}

TEST(Synth, VanishedCellKeepsItsLabel) {
  SynthSpec spec;
  spec.scenario = Scenario::vanishing;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SynthSequence s = synth_generate(spec, seed);
    const auto vanished = s.vanished_frames();
    ASSERT_TRUE(std::find(vanished.begin(), vanished.end(), 6u) != vanished.end());
    ASSERT_TRUE(std::find(vanished.begin(), vanished.end(), 7u) != vanished.end());
    const auto& labels = s.sequence.labels;
    EXPECT_EQ(foreground_count(labels[6]), foreground_count(labels[5])) << "seed " << seed;
    // The hidden cell is drawn at background level.
    const auto ev = std::find_if(s.events.begin(), s.events.end(),
                                 [](const SceneEvent& e) { return e.kind == "vanish" && e.frame == 6; });
    ASSERT_NE(ev, s.events.end());
    double inside = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels[6].size(); ++i) {
      if (labels[6].pixels[i] == ev->cell) {
        inside += s.sequence.frames[6].pixels[i];
        ++n;
      }
    }
    ASSERT_GT(n, 0u);
    EXPECT_NEAR(inside / static_cast<double>(n), spec.background, 0.03);
  }
}

TEST(Synth, RejectsOvercrowdedAndMisalignedCanvases) {
  SynthSpec spec;
  spec.height = spec.width = 16;
  spec.cells = 200;
  EXPECT_THROW(synth_generate(spec, 1), UsageError);
  spec = SynthSpec{};
  spec.height = 60;
  try {
    synth_generate(spec, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2^(levels-1)"), std::string::npos);
  }
  EXPECT_THROW(parse_scenario("crowded"), UsageError);
}

TEST(Synth, DatasetLayoutAndSceneManifest) {
  const auto dir = scratch::dir();
  SynthSpec spec;
  spec.frames = 10;
  spec.scenario = Scenario::vanishing;
  const auto seqs = synth_dataset(dir, spec, 2, 5);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "01" / "t009.pgm"));
  EXPECT_TRUE(fs::exists(dir / "02_GT" / "man_seg009.pgm"));
  ASSERT_TRUE(fs::exists(dir / "01_GT" / "scene.txt"));
  const auto events = read_scene(dir / "01_GT" / "scene.txt");
  ASSERT_EQ(events.size(), seqs[0].events.size());
  EXPECT_EQ(vanished_frames(events), seqs[0].vanished_frames());
  const auto loaded = load_dataset(dir);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[1].labels, seqs[1].sequence.labels);
}
