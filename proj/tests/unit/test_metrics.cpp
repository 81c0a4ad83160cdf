#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "ulstm/metrics.hpp"

using namespace ulstm;

namespace {

InstanceMap from_rows(const std::vector<std::vector<int>>& rows) {
  InstanceMap m(rows.size(), rows[0].size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

BinaryMap mask_of(const InstanceMap& m) {
  BinaryMap b(m.height, m.width, 0);
  for (std::size_t i = 0; i < m.size(); ++i) b.pixels[i] = m.pixels[i] > 0;
  return b;
}

}  // namespace

TEST(ConnectedComponents, EmptyMap) {
  const InstanceMap out = connected_components(BinaryMap(5, 7, 0));
  EXPECT_EQ(out, InstanceMap(5, 7, 0));
}

TEST(ConnectedComponents, DiagonalPairDependsOnConnectivity) {
  BinaryMap m(3, 3, 0);
  m(0, 0) = 1;
  m(1, 1) = 1;
  const InstanceMap four = connected_components(m, Connectivity::four);
  EXPECT_EQ(four(0, 0), 1);
  EXPECT_EQ(four(1, 1), 2);
  const InstanceMap eight = connected_components(m, Connectivity::eight);
  EXPECT_EQ(eight(0, 0), 1);
  EXPECT_EQ(eight(1, 1), 1);
  EXPECT_TRUE(oracle::same_partition(four, oracle::flood_fill(m, 4)));
  EXPECT_TRUE(oracle::same_partition(eight, oracle::flood_fill(m, 8)));
}

TEST(ConnectedComponents, RasterDiscoveryOrder) {
  const InstanceMap m = from_rows({{0, 0, 1, 0}, {1, 0, 1, 0}, {1, 0, 0, 1}});
  const InstanceMap out = connected_components(mask_of(m));
  EXPECT_EQ(out, from_rows({{0, 0, 1, 0}, {2, 0, 1, 0}, {2, 0, 0, 3}}));
}

TEST(ConnectedComponents, MatchesFloodFillOnRandomMaps) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const BinaryMap m = oracle::random_blobs(rng, 16, 16, 0.2);
    for (int conn : {4, 8}) {
      const InstanceMap got = connected_components(m, parse_connectivity(conn));
      ASSERT_TRUE(oracle::same_partition(got, oracle::flood_fill(m, conn))) << "trial " << trial << " conn " << conn;
      EXPECT_TRUE(is_valid_instance_map(got, parse_connectivity(conn)));
    }
  }
}

TEST(ConnectedComponents, ValidityCheck) {
  EXPECT_TRUE(is_valid_instance_map(from_rows({{1, 1, 0}, {0, 2, 2}})));
  EXPECT_FALSE(is_valid_instance_map(from_rows({{1, 0, 1}})));
  EXPECT_FALSE(is_valid_instance_map(from_rows({{1, 0}, {0, 1}}), Connectivity::four));
  EXPECT_TRUE(is_valid_instance_map(from_rows({{1, 0}, {0, 1}}), Connectivity::eight));
  EXPECT_THROW(parse_connectivity(6), UsageError);
}

TEST(SegScore, IdenticalMapsScoreOne) {
  const InstanceMap m = from_rows({{1, 1, 0, 2}, {1, 0, 0, 2}});
  const SegReport r = seg_score(m, m);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_DOUBLE_EQ(r.mean(), 1.0);
}

TEST(SegScore, HalfCoverageIsNotAMatch) {
  // GT cell of 4 px; prediction covers exactly 2 of them.
  const InstanceMap gt = from_rows({{1, 1}, {1, 1}});
  const InstanceMap pred = from_rows({{5, 5}, {0, 0}});
  const SegReport r = seg_score(gt, pred);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].matched_pred, 0);
  EXPECT_EQ(r.cells[0].jaccard, 0.0);
}

TEST(SegScore, NinePixelCellWithSixOverlapAndUnionTwelve) {
  // GT: 3x3 block. Prediction: 6 px of the block plus 3 px outside it.
  InstanceMap gt(5, 5, 0), pred(5, 5, 0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) gt(r, c) = 1;
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) pred(r, c) = 7;
  const SegReport r = seg_score(gt, pred);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].matched_pred, 7);
  EXPECT_DOUBLE_EQ(r.cells[0].jaccard, 0.5);
}

TEST(SegScore, MatchesBruteForceOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto [gt, pred] = oracle::random_seg_pair(rng);
    const SegReport r = seg_score(gt, pred);
    const std::vector<double> want = oracle::seg_scores(gt, pred);
    ASSERT_EQ(r.cells.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_NEAR(r.cells[i].jaccard, want[i], 1e-12) << "trial " << trial;
      EXPECT_GE(r.cells[i].jaccard, 0.0);
      EXPECT_LE(r.cells[i].jaccard, 1.0);
    }
  }
}

TEST(SegScore, InvariantToRelabeling) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto [gt, pred] = oracle::random_seg_pair(rng);
    InstanceMap gt2 = gt, pred2 = pred;
    for (auto& v : gt2.pixels) v = v ? 1000 - v : 0;
    for (auto& v : pred2.pixels) v = v ? 3 * v + 17 : 0;
    EXPECT_NEAR(seg_score(gt, pred).mean(), seg_score(gt2, pred2).mean(), 1e-15);
  }
}

TEST(SegScore, SelfScoreIsOneForValidMaps) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto gt = oracle::random_seg_pair(rng).first;
    const SegReport r = seg_score(gt, gt);
    if (r.cells.empty()) continue;
    EXPECT_DOUBLE_EQ(r.mean(), 1.0);
  }
}

TEST(SegScore, MeanOverAllCellsOfAllFrames) {
  const InstanceMap a = from_rows({{1, 0, 2}});
  const InstanceMap miss = from_rows({{0, 0, 0}});
  const SegReport r = seg_score(std::vector<InstanceMap>{a, a}, std::vector<InstanceMap>{a, miss});
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_DOUBLE_EQ(r.mean(), 0.5);
  EXPECT_EQ(r.cells[2].frame, 1u);
  EXPECT_EQ(SegReport{}.mean(), 0.0);
}

TEST(SegScore, DimensionMismatchIsUsageError) {
  EXPECT_THROW(seg_score(InstanceMap(2, 2), InstanceMap(2, 3)), UsageError);
  EXPECT_THROW(seg_score(std::vector<InstanceMap>(2), std::vector<InstanceMap>(1)), UsageError);
}

TEST(SegScore, CsvAndSummary) {
  const InstanceMap gt = from_rows({{1, 1}, {1, 1}});
  const InstanceMap pred = from_rows({{3, 3}, {3, 0}});
  const SegReport r = seg_score(gt, pred);
  std::ostringstream os;
  write_seg_csv(os, r);
  EXPECT_EQ(os.str(), "frame,gt_label,matched_pred,jaccard\n0,1,3,0.75\n");
  EXPECT_EQ(seg_summary(r), "SEG 0.750000 over 1 ground-truth cells");
}
