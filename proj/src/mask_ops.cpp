#include "segfield/mask_ops.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "segfield/error.hpp"

namespace segfield {
namespace {

// Lower envelope of parabolas: d[q] = min_p (q - p)^2 + f[p].
void squared_distance_1d(const std::vector<double>& f, std::vector<double>& d,
                         std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
  };
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double diff = q - v[k];
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

Raster<float> distance_to_outside(const BitMask& mask) {
  // One pixel of padding stands for the outside of the image.
  const int w = mask.width() + 2;
  const int h = mask.height() + 2;
  // Every padded column holds a zero, so a large finite value stands in for infinity.
  constexpr double far = 1e20;
  std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) grid[static_cast<std::size_t>(y + 1) * w + (x + 1)] = far;
    }
  }
  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < w; ++x) {
    f.resize(h);
    d.resize(h);
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    squared_distance_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    f.resize(w);
    d.resize(w);
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
    squared_distance_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
  }
  Raster<float> out(mask.width(), mask.height(), 0.0f);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        out(x, y) = static_cast<float>(std::sqrt(grid[static_cast<std::size_t>(y + 1) * w + (x + 1)]));
      }
    }
  }
  return out;
}

BitMask erode(const BitMask& mask, int radius_px) {
  if (radius_px <= 0) return mask;
  const auto dist = distance_to_outside(mask);
  BitMask out(mask.width(), mask.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = dist[i] > radius_px ? 1 : 0;
  return out;
}

BitMask complement(const BitMask& mask) {
  BitMask out(mask.width(), mask.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 0 : 1;
  return out;
}

double mask_iou(const BitMask& a, const BitMask& b) {
  if (!a.same_shape(b.width(), b.height())) {
    throw Error(Errc::dimension_mismatch, "IoU of masks with different sizes");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace segfield
