#include <gtest/gtest.h>

#include <random>
#include <set>

#include "segfield/kmeans.hpp"

using namespace segfield;

namespace {

std::vector<Vec2> blobs(std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.5);
  std::vector<Vec2> pts;
  for (const Vec2 c : {Vec2(0, 0), Vec2(30, 5), Vec2(10, 40)}) {
    for (int i = 0; i < 50; ++i) pts.emplace_back(c.x() + n(rng), c.y() + n(rng));
  }
  return pts;
}

}  // namespace

TEST(KMeans, ObjectiveNonIncreasing) {
  const auto pts = blobs(1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = kmeans(pts, 4, 50, seed);
    ASSERT_FALSE(r.objective_history.empty());
    for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
      EXPECT_LE(r.objective_history[i], r.objective_history[i - 1] + 1e-9);
    }
  }
}

TEST(KMeans, FindsSeparatedBlobs) {
  const auto pts = blobs(2);
  const auto r = kmeans(pts, 3, 50, 7);
  std::set<int> labels;
  for (int block = 0; block < 3; ++block) {
    const int first = r.assignment[block * 50];
    for (int i = 0; i < 50; ++i) EXPECT_EQ(r.assignment[block * 50 + i], first);
    labels.insert(first);
  }
  EXPECT_EQ(labels.size(), 3u);
}

TEST(KMeans, MedoidsAreMembersNearestCentroid) {
  const auto pts = blobs(3);
  const auto r = kmeans(pts, 3, 50, 1);
  ASSERT_EQ(r.medoids.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto m = r.medoids[c];
    EXPECT_EQ(r.assignment[m], static_cast<int>(c));
    const double dm = (pts[m] - r.centroids[c]).squaredNorm();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (r.assignment[i] == static_cast<int>(c)) {
        EXPECT_LE(dm, (pts[i] - r.centroids[c]).squaredNorm());
      }
    }
  }
}

TEST(KMeans, SaturationMakesSingletons) {
  const std::vector<Vec2> pts{{0, 0}, {1, 0}, {5, 5}};
  for (int k : {3, 7}) {
    const auto r = kmeans(pts, k, 10, 0);
    ASSERT_EQ(r.medoids.size(), 3u);
    std::set<std::size_t> unique(r.medoids.begin(), r.medoids.end());
    EXPECT_EQ(unique.size(), 3u);
  }
}

TEST(KMeans, FixedSeedIsBitwiseReproducible) {
  const auto pts = blobs(4);
  const auto a = kmeans(pts, 5, 30, 99);
  const auto b = kmeans(pts, 5, 30, 99);
  EXPECT_EQ(a.medoids, b.medoids);
  EXPECT_EQ(a.assignment, b.assignment);
  for (std::size_t i = 0; i < a.centroids.size(); ++i) EXPECT_EQ(a.centroids[i], b.centroids[i]);
}
