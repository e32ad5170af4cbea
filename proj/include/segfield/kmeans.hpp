#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "segfield/scene_model.hpp"

namespace segfield {

struct KMeansResult {
  std::vector<Vec2> centroids;
  std::vector<int> assignment;             // cluster per input point
  std::vector<std::size_t> medoids;        // per cluster: member nearest its centroid
  std::vector<double> objective_history;   // sum of squared distances after each assignment
};

/// Lloyd's algorithm with farthest-point initialization. The first center is
/// drawn from `seed`; the rest are the points farthest from those chosen.
/// With k >= points.size() every point is its own cluster.
KMeansResult kmeans(std::span<const Vec2> points, int k, int max_iters, std::uint64_t seed);

}  // namespace segfield
