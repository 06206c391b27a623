#include "slv/geometry.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "oracles.h"
#include "slv/error.h"

namespace slv {
namespace {

TEST(IouTest, IdenticalBoxes) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
}

TEST(IouTest, DisjointBoxes) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
}

TEST(IouTest, PartialOverlapMatchesPixelCount) {
  const Box a{0, 0, 10, 10}, b{5, 5, 15, 15};
  EXPECT_NEAR(testing::pixel_iou(a, b), 25.0 / 175.0, 1e-15);
  EXPECT_DOUBLE_EQ(iou(a, b), 25.0 / 175.0);
}

TEST(IouTest, TouchingEdgesDoNotOverlap) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
}

TEST(IouTest, RandomBoxesAgreeWithPixelOracleAndAreSymmetric) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const Box a = testing::random_box(rng, 24, 24);
    const Box b = testing::random_box(rng, 24, 24);
    const double v = iou(a, b);
    EXPECT_NEAR(v, testing::pixel_iou(a, b), 1e-12);
    EXPECT_DOUBLE_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  }
}

TEST(NmsTest, Singleton) {
  const std::vector<Box> boxes = {{0, 0, 5, 5}};
  const std::vector<double> scores = {0.3};
  EXPECT_EQ(nms(boxes, scores, 0.5), std::vector<std::size_t>{0});
}

TEST(NmsTest, IdenticalBoxesKeepHigherScore) {
  const std::vector<Box> boxes = {{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<double> scores = {0.9, 0.8};
  EXPECT_EQ(nms(boxes, scores, 0.5), std::vector<std::size_t>{0});
}

TEST(NmsTest, HandTracedGreedyLoop) {
  // box2 overlaps box0 at 60/100 = 0.6; box1 is disjoint.
  const std::vector<Box> boxes = {{0, 0, 10, 10}, {20, 20, 30, 30}, {0, 0, 10, 6}};
  ASSERT_DOUBLE_EQ(iou(boxes[0], boxes[2]), 0.6);
  const std::vector<double> scores = {0.9, 0.8, 0.7};
  EXPECT_EQ(nms(boxes, scores, 0.5), (std::vector<std::size_t>{0, 1}));
}

TEST(NmsTest, TiesBrokenByLowerIndex) {
  const std::vector<Box> boxes = {{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<double> scores = {0.5, 0.5};
  EXPECT_EQ(nms(boxes, scores, 0.5), std::vector<std::size_t>{0});
}

TEST(NmsTest, LengthMismatchIsInputError) {
  const std::vector<Box> boxes = {{0, 0, 1, 1}};
  const std::vector<double> scores = {0.1, 0.2};
  EXPECT_THROW(nms(boxes, scores, 0.5), InputError);
}

TEST(NmsTest, OutputIndependentOfInputOrder) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 12;
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) {
      boxes.push_back(testing::random_box(rng, 30, 30));
      scores.push_back(0.01 * (i + 1));  // distinct
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Box> pb;
    std::vector<double> ps;
    for (std::size_t p : perm) {
      pb.push_back(boxes[p]);
      ps.push_back(scores[p]);
    }
    std::vector<Box> kept, kept_perm;
    for (std::size_t i : nms(boxes, scores, 0.4)) kept.push_back(boxes[i]);
    for (std::size_t i : nms(pb, ps, 0.4)) kept_perm.push_back(pb[i]);
    EXPECT_EQ(kept, kept_perm);
  }
}

TEST(ClipBoxTest, InsideUnchanged) {
  EXPECT_EQ(clip_box({0, 0, 10, 10}, 100, 100), (Box{0, 0, 10, 10}));
}

TEST(ClipBoxTest, NegativeCornerClampedAtZero) {
  EXPECT_EQ(clip_box({-5, -5, 10, 10}, 100, 100), (Box{0, 0, 10, 10}));
}

TEST(ClipBoxTest, FarCornerClampedAtBorder) {
  EXPECT_EQ(clip_box({90, 90, 120, 130}, 100, 100), (Box{90, 90, 100, 100}));
}

TEST(ClipBoxTest, EntirelyOutsideIsInputError) {
  EXPECT_THROW(clip_box({120, 0, 130, 10}, 100, 100), InputError);
  EXPECT_THROW(clip_box({-20, -20, -1, -1}, 100, 100), InputError);
}

TEST(ConnectedComponentsTest, EmptyGrid) {
  EXPECT_TRUE(connected_components(BinaryGrid(5, 5)).empty());
}

TEST(ConnectedComponentsTest, SingleCell) {
  BinaryGrid g(4, 4);
  g.set(2, 1, true);
  const auto comps = connected_components(g);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0], (Component{{2, 1}}));
}

TEST(ConnectedComponentsTest, DiagonalNeighboursJoinUnderEightConnectivity) {
  BinaryGrid g(3, 3);
  g.set(0, 0, true);
  g.set(1, 1, true);
  const auto comps = connected_components(g);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].size(), 2u);
}

TEST(ConnectedComponentsTest, OrderedByFirstCellRowMajor) {
  BinaryGrid g(6, 6);
  g.set(4, 0, true);
  g.set(0, 5, true);
  g.set(2, 2, true);
  const auto comps = connected_components(g);
  ASSERT_EQ(comps.size(), 3u);
  EXPECT_EQ(comps[0][0], (Cell{0, 5}));
  EXPECT_EQ(comps[1][0], (Cell{2, 2}));
  EXPECT_EQ(comps[2][0], (Cell{4, 0}));
}

TEST(ConnectedComponentsTest, RandomGridsArePartitionedWithTightRects) {
  std::mt19937 rng(3);
  std::bernoulli_distribution coin(0.35);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 1 + trial % 17, w = 1 + (trial * 7) % 19;
    BinaryGrid g(h, w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) g.set(i, j, coin(rng));

    std::set<std::pair<int, int>> seen;
    for (const auto& comp : connected_components(g)) {
      ASSERT_FALSE(comp.empty());
      const Box rect = min_bounding_rect(comp);
      bool left = false, right = false, top = false, bottom = false;
      for (const Cell& c : comp) {
        EXPECT_TRUE(g.at(c.row, c.col));
        EXPECT_TRUE(seen.insert({c.row, c.col}).second) << "cell in two components";
        EXPECT_TRUE(rect.x0 <= c.col && c.col < rect.x1 && rect.y0 <= c.row && c.row < rect.y1);
        left |= c.col == rect.x0;
        right |= c.col == rect.x1 - 1;
        top |= c.row == rect.y0;
        bottom |= c.row == rect.y1 - 1;
      }
      // Shrinking any side by one pixel would drop a cell.
      EXPECT_TRUE(left && right && top && bottom);
    }
    EXPECT_EQ(seen.size(), g.count());
  }
}

TEST(MinBoundingRectTest, SingleCell) {
  const std::vector<Cell> comp = {{3, 4}};
  EXPECT_EQ(min_bounding_rect(comp), (Box{4, 3, 5, 4}));
}

TEST(MinBoundingRectTest, CornersDefineRect) {
  const std::vector<Cell> comp = {{0, 0}, {2, 2}};
  EXPECT_EQ(min_bounding_rect(comp), (Box{0, 0, 3, 3}));
}

TEST(MinBoundingRectTest, LShapedComponent) {
  std::vector<Cell> comp;
  for (int r = 1; r <= 5; ++r) comp.push_back({r, 2});  // vertical bar, col 2
  for (int c = 3; c <= 7; ++c) comp.push_back({5, c});  // foot along row 5
  EXPECT_EQ(min_bounding_rect(comp), (Box{2, 1, 8, 6}));
}

TEST(MinBoundingRectTest, EmptyIsInputError) {
  EXPECT_THROW(min_bounding_rect(std::vector<Cell>{}), InputError);
}

}  // namespace
}  // namespace slv
