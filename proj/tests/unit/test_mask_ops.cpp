#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "segfield/error.hpp"
#include "segfield/mask_ops.hpp"

using namespace segfield;

namespace {

// Nearest out-of-mask pixel by exhaustive scan, with a one-pixel outside frame.
double brute_distance(const BitMask& m, int x, int y) {
  if (!m(x, y)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int yy = -1; yy <= m.height(); ++yy) {
    for (int xx = -1; xx <= m.width(); ++xx) {
      const bool outside = !m.contains(xx, yy) || !m(xx, yy);
      if (outside) best = std::min(best, std::hypot(double(xx - x), double(yy - y)));
    }
  }
  return best;
}

BitMask disk(int size, double cx, double cy, double r) {
  BitMask m(size, size, 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m(x, y) = std::hypot(x - cx, y - cy) <= r;
  }
  return m;
}

}  // namespace

TEST(DistanceTransform, MatchesBruteForceOnRandomMasks) {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    BitMask m(23, 17, 0);
    std::bernoulli_distribution on(0.25 + 0.12 * trial);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = on(rng);
    const auto d = distance_to_outside(m);
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        ASSERT_NEAR(d(x, y), brute_distance(m, x, y), 1e-5) << x << "," << y;
      }
    }
  }
}

TEST(DistanceTransform, FullImageCenter) {
  const BitMask m(11, 11, 1);
  const auto d = distance_to_outside(m);
  EXPECT_GE(d(5, 5), 5.0);
  EXPECT_LE(d(5, 5), 6.0);
}

TEST(DistanceTransform, SinglePixel) {
  BitMask m(5, 5, 0);
  m(2, 2) = 1;
  const auto d = distance_to_outside(m);
  EXPECT_EQ(d(2, 2), 1.0f);
  EXPECT_EQ(d(1, 2), 0.0f);
}

TEST(DistanceTransform, DiskMaximumIsRadius) {
  const double r = 20.0;
  const auto d = distance_to_outside(disk(61, 30, 30, r));
  float best = 0;
  for (std::size_t i = 0; i < d.size(); ++i) best = std::max(best, d[i]);
  EXPECT_NEAR(best, r, 1.0);
}

TEST(Erode, ZeroRadiusIsIdentityAndMonotone) {
  const auto m = disk(41, 20, 20, 12);
  EXPECT_EQ(erode(m, 0), m);
  const auto e2 = erode(m, 2);
  const auto e4 = erode(m, 4);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (e4[i]) EXPECT_TRUE(e2[i]);
    if (e2[i]) EXPECT_TRUE(m[i]);
  }
  EXPECT_LT(count_set(e4), count_set(e2));
}

TEST(Complement, IsInvolution) {
  const auto m = disk(21, 8, 11, 6);
  EXPECT_EQ(complement(complement(m)), m);
  EXPECT_EQ(count_set(complement(m)) + count_set(m), static_cast<long>(m.size()));
}

TEST(MaskIou, Cases) {
  const auto a = disk(31, 15, 15, 8);
  EXPECT_EQ(mask_iou(a, a), 1.0);
  BitMask left(30, 10, 0), right(30, 10, 0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 30; ++x) (x < 10 ? left : right)(x, y) = 1;
  }
  EXPECT_EQ(mask_iou(left, right), 0.0);
  // 100 px subset of 300 px.
  BitMask b(30, 10, 1);
  EXPECT_NEAR(mask_iou(left, b), 100.0 / 300.0, 1e-12);
  EXPECT_EQ(mask_iou(left, b), mask_iou(b, left));
  EXPECT_EQ(mask_iou(BitMask(4, 4, 0), BitMask(4, 4, 0)), 0.0);
  EXPECT_THROW(mask_iou(BitMask(4, 4, 0), BitMask(5, 4, 0)), Error);
}
