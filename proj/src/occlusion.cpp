#include "segfield/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>

#include <opencv2/imgproc.hpp>

#include "segfield/error.hpp"
#include "segfield/mask_ops.hpp"

using nlohmann::json;

namespace segfield {

void OcclusionConfig::validate() const {
  if (alpha && !(*alpha > 0.0)) throw Error(Errc::invalid_argument, "alpha must be positive");
  if (gaussian_sigma_px < 0.0) throw Error(Errc::invalid_argument, "gaussian_sigma_px < 0");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) {
    throw Error(Errc::invalid_argument, "mask_threshold must lie in (0, 1)");
  }
  if (!(iou_discard_below > 0.0 && iou_discard_below < 1.0)) {
    throw Error(Errc::invalid_argument, "iou_discard_below must lie in (0, 1)");
  }
}

std::vector<Triangle> delaunay_triangles(std::span<const Vec2> points) {
  if (points.size() < 3) return {};
  double x0 = points[0].x(), x1 = x0, y0 = points[0].y(), y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  const cv::Rect2f rect(static_cast<float>(x0 - 2), static_cast<float>(y0 - 2),
                        static_cast<float>(x1 - x0 + 4), static_cast<float>(y1 - y0 + 4));
  cv::Subdiv2D subdiv;
  subdiv.initDelaunay(rect);
  // Subdiv2D works in float; triangles are mapped back to indices by coordinate.
  std::map<std::pair<float, float>, int> first_index;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const cv::Point2f p(static_cast<float>(points[i].x()), static_cast<float>(points[i].y()));
    if (!first_index.emplace(std::make_pair(p.x, p.y), static_cast<int>(i)).second) continue;
    subdiv.insert(p);
  }
  std::vector<cv::Vec6f> raw;
  subdiv.getTriangleList(raw);
  std::vector<Triangle> triangles;
  triangles.reserve(raw.size());
  for (const auto& t : raw) {
    Triangle tri;
    bool real = true;
    for (int k = 0; k < 3 && real; ++k) {
      const auto it = first_index.find({t[2 * k], t[2 * k + 1]});
      real = it != first_index.end();
      if (real) tri[k] = it->second;
    }
    if (real) triangles.push_back(tri);
  }
  return triangles;
}

double auto_alpha(std::span<const Vec2> points) {
  if (points.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> nn(points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i == j) continue;
      nn[i] = std::min(nn[i], (points[i] - points[j]).norm());
    }
  }
  // Spacing below the raster pitch carries no shape information.
  for (auto& d : nn) d = std::max(d, 1.0);
  const auto mid = nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2);
  std::nth_element(nn.begin(), mid, nn.end());
  return 3.0 * *mid;
}

namespace {

double circumradius(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double ab = (a - b).norm(), bc = (b - c).norm(), ca = (c - a).norm();
  const double cross = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  const double area2 = std::abs(cross);
  if (area2 == 0.0) return std::numeric_limits<double>::infinity();
  return ab * bc * ca / (2.0 * area2);
}

}  // namespace

std::vector<Triangle> alpha_shape(std::span<const Vec2> points, double alpha) {
  std::vector<Triangle> kept;
  for (const auto& t : delaunay_triangles(points)) {
    if (circumradius(points[t[0]], points[t[1]], points[t[2]]) <= alpha) kept.push_back(t);
  }
  return kept;
}

BitMask rasterize_triangles(std::span<const Vec2> points, std::span<const Triangle> triangles,
                            int width, int height) {
  BitMask mask(width, height, 0);
  constexpr double eps = 1e-9;
  for (const auto& t : triangles) {
    const Vec2& a = points[t[0]];
    const Vec2& b = points[t[1]];
    const Vec2& c = points[t[2]];
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area == 0.0) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x, y);
        auto edge = [&](const Vec2& u, const Vec2& v) {
          return ((v - u).x() * (p - u).y() - (v - u).y() * (p - u).x()) / area;
        };
        if (edge(a, b) >= -eps && edge(b, c) >= -eps && edge(c, a) >= -eps) mask(x, y) = 1;
      }
    }
  }
  return mask;
}

BitMask smooth_mask(const BitMask& mask, double sigma_px, double threshold) {
  if (sigma_px <= 0.0) return mask;
  cv::Mat src(mask.height(), mask.width(), CV_32F);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) src.at<float>(y, x) = mask(x, y) ? 1.0f : 0.0f;
  }
  cv::Mat blurred;
  cv::GaussianBlur(src, blurred, cv::Size(0, 0), sigma_px, sigma_px, cv::BORDER_REPLICATE);
  BitMask out(mask.width(), mask.height(), 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) out(x, y) = blurred.at<float>(y, x) >= threshold;
  }
  return out;
}

std::vector<Vec2> project_cloud(const SparseCloud& cloud, const ViewImage& view) {
  std::vector<Vec2> out;
  for (const auto& [id, p] : cloud.points) {
    if (const auto proj = project_point(p.xyz, view.intrinsics, view.pose)) {
      out.emplace_back(proj->u, proj->v);
    }
  }
  return out;
}

Mask estimate_mask_from_cloud(const SparseCloud& object_cloud, const ViewImage& view,
                              const OcclusionConfig& cfg) {
  cfg.validate();
  const auto pts = project_cloud(object_cloud, view);
  if (pts.size() < 3) {
    throw Error(Errc::insufficient_points, "only " + std::to_string(pts.size()) +
                                               " object points project into view " +
                                               std::to_string(view.view_id));
  }
  const double alpha = cfg.alpha ? *cfg.alpha : auto_alpha(pts);
  const auto triangles = alpha_shape(pts, alpha);
  Mask m;
  m.view_id = view.view_id;
  m.bits = smooth_mask(
      rasterize_triangles(pts, triangles, view.intrinsics.width, view.intrinsics.height),
      cfg.gaussian_sigma_px, cfg.mask_threshold);
  m.score = 1.0;
  m.status = MaskStatus::accepted;
  return m;
}

double occlusion_iou(const Mask& estimated, const Mask& segmented) {
  return mask_iou(estimated.bits, segmented.bits);
}

std::vector<int> FilterReport::discarded() const {
  std::vector<int> ids;
  for (const auto& e : entries) {
    if (e.decision == "discarded") ids.push_back(e.view_id);
  }
  return ids;
}

json FilterReport::to_json() const {
  json out = json::array();
  for (const auto& e : entries) {
    out.push_back({{"view_id", e.view_id},
                   {"iou", e.iou ? json(*e.iou) : json(nullptr)},
                   {"decision", e.decision}});
  }
  return out;
}

FilterReport filter_views(std::map<int, Mask>& masks, const SparseCloud& object_cloud,
                          std::span<const ViewImage> views, const OcclusionConfig& cfg) {
  cfg.validate();
  std::vector<const ViewImage*> todo;
  for (const auto& v : views) {
    const auto it = masks.find(v.view_id);
    if (it != masks.end()) todo.push_back(&v);
  }
  std::vector<FilterEntry> entries(todo.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < todo.size(); ++i) {
    const ViewImage& view = *todo[i];
    const Mask& mask = masks.at(view.view_id);
    FilterEntry& e = entries[i];
    e.view_id = view.view_id;
    if (mask.status != MaskStatus::accepted) {
      e.decision = "skipped";
      continue;
    }
    try {
      const Mask estimate = estimate_mask_from_cloud(object_cloud, view, cfg);
      e.iou = occlusion_iou(estimate, mask);
      e.decision = *e.iou < cfg.iou_discard_below ? "discarded" : "kept";
    } catch (const Error& err) {
      if (err.code() == Errc::insufficient_points) {
        e.decision = "unprocessed";
      } else {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& e : entries) {
    if (e.decision == "discarded") masks.at(e.view_id).status = MaskStatus::discarded_occluded;
    if (e.decision == "unprocessed") masks.at(e.view_id).status = MaskStatus::unprocessed;
  }
  return FilterReport{std::move(entries)};
}

}  // namespace segfield
