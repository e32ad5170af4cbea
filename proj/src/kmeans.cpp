#include "segfield/kmeans.hpp"

#include <limits>
#include <numeric>
#include <random>

#include "segfield/error.hpp"

namespace segfield {

KMeansResult kmeans(std::span<const Vec2> points, int k, int max_iters, std::uint64_t seed) {
  if (k < 1) throw Error(Errc::invalid_argument, "k-means needs k >= 1");
  KMeansResult r;
  const std::size_t n = points.size();
  if (n == 0) return r;
  if (static_cast<std::size_t>(k) >= n) {
    r.assignment.resize(n);
    std::iota(r.assignment.begin(), r.assignment.end(), 0);
    r.medoids.resize(n);
    std::iota(r.medoids.begin(), r.medoids.end(), std::size_t{0});
    r.centroids.assign(points.begin(), points.end());
    r.objective_history.push_back(0.0);
    return r;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::vector<std::size_t> chosen{first(rng)};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < static_cast<std::size_t>(k)) {
    const Vec2& c = points[chosen.back()];
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (points[i] - c).squaredNorm());
      if (nearest[i] > far_d) {
        far_d = nearest[i];
        far = i;
      }
    }
    chosen.push_back(far);
  }
  for (const auto i : chosen) r.centroids.push_back(points[i]);

  r.assignment.assign(n, -1);
  for (int iter = 0; iter < std::max(1, max_iters); ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (points[i] - r.centroids[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || r.assignment[i] != best;
      r.assignment[i] = best;
      objective += best_d;
    }
    r.objective_history.push_back(objective);
    if (!changed && iter > 0) break;
    std::vector<Vec2> sums(k, Vec2::Zero());
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[r.assignment[i]] += points[i];
      ++counts[r.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) r.centroids[c] = sums[c] / counts[c];  // empty clusters keep their center
    }
  }

  r.medoids.assign(k, n);
  std::vector<double> best_d(k, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const int c = r.assignment[i];
    const double d = (points[i] - r.centroids[c]).squaredNorm();
    if (d < best_d[c]) {
      best_d[c] = d;
      r.medoids[c] = i;
    }
  }
  std::erase(r.medoids, n);  // clusters that ended up empty
  return r;
}

}  // namespace segfield
