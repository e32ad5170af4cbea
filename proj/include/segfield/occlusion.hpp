#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segfield/colmap_io.hpp"
#include "segfield/scene_model.hpp"

namespace segfield {

struct OcclusionConfig {
  std::optional<double> alpha;  // circumradius limit in pixels; empty = auto
  double gaussian_sigma_px = 5.0;
  double mask_threshold = 0.5;
  double iou_discard_below = 0.5;

  void validate() const;
};

using Triangle = std::array<int, 3>;

/// Delaunay triangulation; indices refer to `points`. Duplicate points are
/// triangulated once, under their first index.
std::vector<Triangle> delaunay_triangles(std::span<const Vec2> points);

/// 3 x median nearest-neighbour distance, each distance floored at one pixel.
double auto_alpha(std::span<const Vec2> points);

/// Delaunay triangles whose circumradius is at most `alpha`; their union is
/// the alpha shape. An infinite alpha keeps the whole convex hull.
std::vector<Triangle> alpha_shape(std::span<const Vec2> points, double alpha);

/// Pixels whose centers fall inside (or on the edge of) any triangle.
BitMask rasterize_triangles(std::span<const Vec2> points, std::span<const Triangle> triangles,
                            int width, int height);

/// Gaussian blur of the 0/1 mask followed by thresholding; sigma 0 skips the blur.
BitMask smooth_mask(const BitMask& mask, double sigma_px, double threshold);

/// Pixel positions of every cloud point that projects into the view.
std::vector<Vec2> project_cloud(const SparseCloud& cloud, const ViewImage& view);

/// Silhouette estimate from the object cloud: projection, alpha shape,
/// rasterization, smoothing. Throws insufficient_points below 3 projections.
Mask estimate_mask_from_cloud(const SparseCloud& object_cloud, const ViewImage& view,
                              const OcclusionConfig& cfg);

double occlusion_iou(const Mask& estimated, const Mask& segmented);

struct FilterEntry {
  int view_id = 0;
  std::optional<double> iou;
  std::string decision;  // "kept", "discarded", "unprocessed", "skipped"
};

struct FilterReport {
  std::vector<FilterEntry> entries;

  std::vector<int> discarded() const;
  nlohmann::json to_json() const;
};

/// Marks accepted masks whose IoU with the cloud estimate is below
/// cfg.iou_discard_below as discarded_occluded. Views with too few projected
/// points become unprocessed. Mask bits are never modified.
FilterReport filter_views(std::map<int, Mask>& masks, const SparseCloud& object_cloud,
                          std::span<const ViewImage> views, const OcclusionConfig& cfg);

}  // namespace segfield
