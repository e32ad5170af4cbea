#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

#include "segfield/error.hpp"
#include "segfield/mask_ops.hpp"
#include "segfield/occlusion.hpp"
#include "segfield/propagation.hpp"
#include "segfield/synthetic.hpp"

using namespace segfield;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Vec2> filled_disk(Vec2 c, double r, int n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> pts;
  for (int i = 0; i < n; ++i) {
    const double rad = r * std::sqrt(u(rng));
    const double a = 2 * std::numbers::pi * u(rng);
    pts.emplace_back(c.x() + rad * std::cos(a), c.y() + rad * std::sin(a));
  }
  // Rim points so the hull reaches the circle.
  for (int i = 0; i < 64; ++i) {
    const double a = 2 * std::numbers::pi * i / 64;
    pts.emplace_back(c.x() + r * std::cos(a), c.y() + r * std::sin(a));
  }
  return pts;
}

ViewImage blank_view(int w, int h) {
  ViewImage v;
  v.view_id = 1;
  v.intrinsics.width = w;
  v.intrinsics.height = h;
  v.intrinsics.fx = v.intrinsics.fy = 100;
  v.intrinsics.cx = w / 2.0;
  v.intrinsics.cy = h / 2.0;
  v.rgb = RgbImage(w, h);
  return v;
}

// Object cloud whose points project (identity pose, z = 1) to `pixels`.
SparseCloud cloud_for_pixels(const std::vector<Vec2>& pixels, const ViewImage& v) {
  SparseCloud c;
  PointId id = 1;
  for (const auto& p : pixels) {
    Point3D pt;
    pt.xyz = Vec3((p.x() - v.intrinsics.cx) / v.intrinsics.fx,
                  (p.y() - v.intrinsics.cy) / v.intrinsics.fy, 1.0);
    c.points[id++] = pt;
  }
  return c;
}

}  // namespace

TEST(AlphaShape, ThreePointsGiveTriangle) {
  const std::vector<Vec2> pts{{5, 5}, {25, 6}, {12, 20}};
  for (double alpha : {kInf, auto_alpha(pts)}) {
    const auto tris = alpha_shape(pts, alpha);
    ASSERT_EQ(tris.size(), 1u);
  }
  const auto m = rasterize_triangles(pts, alpha_shape(pts, kInf), 32, 32);
  // Shoelace area 0.5*|(20)(15)-(1)(7)| = 146.5; pixel count close to it.
  EXPECT_NEAR(count_set(m), 146.5, 146.5 * 0.12);
  EXPECT_TRUE(m(14, 10));
  EXPECT_FALSE(m(24, 18));
}

TEST(AlphaShape, InfiniteAlphaIsConvexHull) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(3.0, 60.0);
  std::vector<Vec2> pts;
  for (int i = 0; i < 200; ++i) pts.emplace_back(u(rng), u(rng));
  const auto hull_mask = rasterize_triangles(pts, alpha_shape(pts, kInf), 64, 64);

  std::vector<cv::Point2f> cvpts;
  for (const auto& p : pts) cvpts.emplace_back(float(p.x()), float(p.y()));
  std::vector<int> hull;
  cv::convexHull(cvpts, hull);
  std::vector<Triangle> fan;
  for (std::size_t i = 1; i + 1 < hull.size(); ++i) fan.push_back({hull[0], hull[i], hull[i + 1]});
  const auto fan_mask = rasterize_triangles(pts, fan, 64, 64);
  EXPECT_LE(std::abs(static_cast<long>(count_set(hull_mask)) - static_cast<long>(count_set(fan_mask))), 1);
}

TEST(AlphaShape, AutoAlphaExcludesOutlier) {
  auto pts = filled_disk(Vec2(40, 40), 15, 400, 1);
  const auto base = count_set(rasterize_triangles(pts, alpha_shape(pts, auto_alpha(pts)), 128, 128));
  pts.emplace_back(110, 110);
  const auto with = count_set(rasterize_triangles(pts, alpha_shape(pts, auto_alpha(pts)), 128, 128));
  const auto convex = count_set(rasterize_triangles(pts, alpha_shape(pts, kInf), 128, 128));
  EXPECT_EQ(with, base);
  EXPECT_GT(convex, base + 500);
}

TEST(EstimateMask, DenseDiskAreaMatches) {
  const auto v = blank_view(128, 128);
  const double r = 30;
  const auto cloud = cloud_for_pixels(filled_disk(Vec2(64, 64), r, 800, 2), v);
  const Mask m = estimate_mask_from_cloud(cloud, v, OcclusionConfig{});
  EXPECT_NEAR(count_set(m.bits), std::numbers::pi * r * r, 0.10 * std::numbers::pi * r * r);
}

TEST(EstimateMask, TooFewPoints) {
  const auto v = blank_view(64, 64);
  const auto cloud = cloud_for_pixels({{10, 10}, {20, 20}}, v);
  try {
    estimate_mask_from_cloud(cloud, v, OcclusionConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_points);
  }
}

TEST(OcclusionIou, PaperRegimeIsDiscarded) {
  // Estimate is a 40x40 square; the segmented mask covers a 4x40 strip of it
  // (IoU 0.10, close to the 0.096 example).
  const auto v = blank_view(64, 64);
  std::vector<Vec2> square{{10, 10}, {49, 10}, {49, 49}, {10, 49}};
  const auto cloud = cloud_for_pixels(square, v);
  OcclusionConfig cfg;
  cfg.gaussian_sigma_px = 0;
  cfg.alpha = kInf;
  Mask seg;
  seg.view_id = 1;
  seg.status = MaskStatus::accepted;
  seg.bits = BitMask(64, 64, 0);
  for (int y = 10; y < 50; ++y) {
    for (int x = 10; x < 14; ++x) seg.bits(x, y) = 1;
  }
  const Mask est = estimate_mask_from_cloud(cloud, v, cfg);
  EXPECT_EQ(count_set(est.bits), 1600);
  const double iou = occlusion_iou(est, seg);
  EXPECT_NEAR(iou, 0.10, 1e-12);
  std::map<int, Mask> masks{{1, seg}};
  const std::vector<ViewImage> views{v};
  const auto report = filter_views(masks, cloud, views, cfg);
  EXPECT_EQ(masks.at(1).status, MaskStatus::discarded_occluded);
  EXPECT_EQ(masks.at(1).bits, seg.bits);
  EXPECT_EQ(report.discarded(), std::vector<int>{1});
}

namespace {

struct FilterRun {
  std::vector<int> discarded;
  FilterReport report;
};

FilterRun run_filter(const std::string& preset) {
  const SceneSpec spec = preset_scene(preset);
  const auto rendered = render_scene(spec, 0);
  const auto fab = fabricate_sparse_cloud(spec, rendered, 4000, 0.5, 21);
  std::vector<ViewImage> views;
  std::map<int, InstanceMap> instances;
  for (const auto& rv : rendered) {
    views.push_back(rv.view);
    instances[rv.view.view_id] = rv.instances;
  }
  OracleBackend oracle(instances);
  // Seed on the view opposite the wall.
  const int seed_view = 15;
  PromptSet p;
  p.points.push_back({63.5, 63.5, Polarity::positive});
  const std::vector<ObjectSeed> seeds{{1, seed_view, p}};
  auto result = propagate(fab.cloud, views, seeds, oracle, PropagationConfig{});
  const auto object_cloud = export_object_cloud(fab.cloud, result.objects[0]);
  auto& masks = result.masks.at(1);
  FilterRun run;
  run.report = filter_views(masks, object_cloud, views, OcclusionConfig{});
  run.discarded = run.report.discarded();
  return run;
}

}  // namespace

TEST(FilterViews, OccluderDiscardsExactlyTheHiddenViews) {
  const auto run = run_filter("occluded");
  EXPECT_EQ(run.discarded, (std::vector<int>{0, 1, 2, 3})) << run.report.to_json().dump();
}

TEST(FilterViews, OcclusionFreeSceneHasNoDiscards) {
  const auto run = run_filter("occlusion-free");
  EXPECT_TRUE(run.discarded.empty()) << run.report.to_json().dump();
}

TEST(OcclusionConfig, RejectsBadThresholds) {
  OcclusionConfig cfg;
  cfg.mask_threshold = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.iou_discard_below = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}
