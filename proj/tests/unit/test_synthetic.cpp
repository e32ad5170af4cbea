#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "segfield/error.hpp"
#include "segfield/synthetic.hpp"

using namespace segfield;

namespace {

SceneSpec axis_sphere(double radius, double distance) {
  SceneSpec spec;
  SceneObject s;
  s.center = Vec3(0, 0, 0);
  s.size = Vec3::Constant(radius);
  spec.objects.push_back(s);
  spec.intrinsics.fx = spec.intrinsics.fy = 150;
  spec.intrinsics.cx = spec.intrinsics.cy = 63;
  spec.intrinsics.width = spec.intrinsics.height = 127;
  spec.cameras.push_back(
      CameraPose::look_at(Vec3(0, -distance, 0), Vec3::Zero(), Vec3::UnitZ()));
  return spec;
}

}  // namespace

TEST(RenderScene, AxisSphereIsCenteredDisk) {
  const auto views = render_scene(axis_sphere(0.5, 3.0));
  ASSERT_EQ(views.size(), 1u);
  const auto& inst = views[0].instances;
  double su = 0, sv = 0;
  long n = 0;
  for (int y = 0; y < inst.height(); ++y) {
    for (int x = 0; x < inst.width(); ++x) {
      if (inst(x, y) == 1) {
        su += x;
        sv += y;
        ++n;
      }
    }
  }
  ASSERT_GT(n, 0);
  EXPECT_NEAR(su / n, 63.0, 0.05);
  EXPECT_NEAR(sv / n, 63.0, 0.05);
}

TEST(RenderScene, SilhouetteRadiusMatchesAnalyticFormula) {
  const double r = 0.5, z = 3.0, f = 150.0;
  const auto views = render_scene(axis_sphere(r, z));
  const long n = count_set(instance_mask(views[0].instances, 1));
  const double measured = std::sqrt(n / std::numbers::pi);
  EXPECT_NEAR(measured, f * r / std::sqrt(z * z - r * r), 1.0);
}

TEST(RenderScene, EmptySpecIsBackgroundOnly) {
  auto spec = axis_sphere(0.5, 3.0);
  spec.objects.clear();
  const auto views = render_scene(spec);
  for (std::size_t i = 0; i < views[0].instances.size(); ++i) {
    ASSERT_EQ(views[0].instances[i], 0);
    ASSERT_EQ(views[0].view.rgb[i], Eigen::Vector3f::Zero());
  }
}

TEST(RenderScene, DepthIsAlongOpticalAxis) {
  const auto views = render_scene(axis_sphere(0.5, 3.0));
  const auto& depth = *views[0].view.depth;
  EXPECT_NEAR(depth(63, 63), 2.5, 1e-6);
  const auto& v = views[0].view;
  const Ray r = ray_for_pixel(70, 60, v, 0.0, 10.0);
  const auto hit = trace_ray(axis_sphere(0.5, 3.0), r.origin, r.direction);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(depth(70, 60), hit->t * axis_cosine(70, 60, v.intrinsics), 1e-5);
}

TEST(FabricateCloud, ZeroNoiseReprojectsExactly) {
  SceneSpec spec = preset_scene("two-spheres");
  spec.cameras.resize(8);
  const auto views = render_scene(spec);
  const auto fab = fabricate_sparse_cloud(spec, views, 2000, 0.0, 3);
  EXPECT_NO_THROW(fab.cloud.validate());
  ASSERT_GT(fab.cloud.points.size(), 500u);
  for (const auto& [id, p] : fab.cloud.points) {
    EXPECT_GE(p.track.size(), 2u);
    for (const auto& obs : p.track) {
      const auto& v = views[obs.view_id - 1];
      const auto& f = fab.cloud.features.at(obs.view_id)[obs.feature_index];
      const auto proj = project_point(p.xyz, v.view.intrinsics, v.view.pose);
      ASSERT_TRUE(proj);
      EXPECT_NEAR(proj->u, f.uv.x(), 1e-9);
      EXPECT_NEAR(proj->v, f.uv.y(), 1e-9);
      const int x = pixel_index(f.uv.x()), y = pixel_index(f.uv.y());
      EXPECT_EQ(v.instances(x, y), fab.point_instance.at(id));
      // Depth rendered along the feature's own ray.
      const Ray r = ray_for_pixel(f.uv.x(), f.uv.y(), v.view, 0.0, 100.0);
      const auto hit = trace_ray(spec, r.origin, r.direction);
      ASSERT_TRUE(hit);
      EXPECT_NEAR(hit->t * axis_cosine(f.uv.x(), f.uv.y(), v.view.intrinsics), proj->depth, 1e-3);
    }
  }
}

TEST(FabricateCloud, OccludedPointHasNoObservation) {
  SceneSpec spec = preset_scene("occluded");
  const auto views = render_scene(spec);
  const auto fab = fabricate_sparse_cloud(spec, views, 1500, 0.0, 5);
  for (const auto& [id, p] : fab.cloud.points) {
    std::set<int> seen;
    for (const auto& obs : p.track) seen.insert(obs.view_id);
    for (const auto& v : views) {
      const Vec3 eye = v.view.pose.center();
      const Vec3 d = (p.xyz - eye).normalized();
      const auto hit = trace_ray(spec, eye, d);
      ASSERT_TRUE(hit);
      const bool visible = std::abs(hit->t - (p.xyz - eye).norm()) < 1e-3;
      if (!visible) EXPECT_FALSE(seen.count(v.view.view_id)) << "point " << id;
    }
  }
}

TEST(FabricateCloud, NoiseIsSeededAndDeterministic) {
  SceneSpec spec = preset_scene("sphere");
  spec.cameras.resize(4);
  const auto views = render_scene(spec);
  const auto a = fabricate_sparse_cloud(spec, views, 300, 0.5, 9);
  const auto b = fabricate_sparse_cloud(spec, views, 300, 0.5, 9);
  ASSERT_EQ(a.cloud.points.size(), b.cloud.points.size());
  for (const auto& [view, fa] : a.cloud.features) {
    const auto& fb = b.cloud.features.at(view);
    ASSERT_EQ(fa.size(), fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i].uv, fb[i].uv);
  }
}

namespace {

InstanceMap two_disks() {
  InstanceMap m(40, 20, 0);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 40; ++x) {
      if ((x - 9) * (x - 9) + (y - 9) * (y - 9) <= 36) m(x, y) = 1;
      if ((x - 29) * (x - 29) + (y - 9) * (y - 9) <= 49) m(x, y) = 2;
    }
  }
  return m;
}

}  // namespace

TEST(OracleSegment, PositivePromptGivesExactSilhouette) {
  const auto inst = two_disks();
  PromptSet p;
  p.points.push_back({9, 9, Polarity::positive});
  const Mask m = oracle_segment(inst, p);
  EXPECT_EQ(m.bits, instance_mask(inst, 1));
  EXPECT_EQ(m.score, 1.0);
}

TEST(OracleSegment, BoxSelectsMajorityInstance) {
  const auto inst = two_disks();
  PromptSet p;
  p.box = Box{22, 2, 36, 16};
  EXPECT_EQ(oracle_segment(inst, p).bits, instance_mask(inst, 2));
}

TEST(OracleSegment, NegativeVetoesInstance) {
  const auto inst = two_disks();
  PromptSet p;
  p.points.push_back({9, 9, Polarity::positive});
  p.points.push_back({10, 9, Polarity::negative});
  try {
    oracle_segment(inst, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_mask);
  }
}

TEST(OracleSegment, BackgroundPromptIsEmptyMask) {
  PromptSet p;
  p.points.push_back({0, 19, Polarity::positive});
  try {
    oracle_segment(two_disks(), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_mask);
  }
}

TEST(OracleSegment, BoundaryNoiseDilatesAndErodes) {
  const auto inst = two_disks();
  PromptSet p;
  p.points.push_back({9, 9, Polarity::positive});
  const auto exact = count_set(oracle_segment(inst, p).bits);
  EXPECT_GT(count_set(oracle_segment(inst, p, 0, 1).bits), exact);
  EXPECT_LT(count_set(oracle_segment(inst, p, 0, -1).bits), exact);
}

TEST(OracleBoxes, SingleDiskTightBox) {
  const auto boxes = oracle_boxes(two_disks(), 1);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].score, 1.0);
  EXPECT_EQ(boxes[0].box, (Box{3, 3, 15, 15}));
}

TEST(OracleBoxes, SplitSilhouetteGivesTwoBoxes) {
  InstanceMap inst = two_disks();
  for (int y = 0; y < 20; ++y) {
    inst(7, y) = 3;
  }
  const auto boxes = oracle_boxes(inst, 1);
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[0].score, 1.0);
  EXPECT_LT(boxes[1].score, 1.0);
  EXPECT_GT(boxes[0].box.u_max, boxes[1].box.u_max);
}

TEST(OracleBoxes, AbsentInstanceIsEmpty) { EXPECT_TRUE(oracle_boxes(two_disks(), 9).empty()); }

TEST(SceneSpec, RejectsDuplicateIdsAndCameraInsideObject) {
  auto spec = preset_scene("two-spheres");
  spec.objects[1].instance_id = spec.objects[0].instance_id;
  EXPECT_THROW(spec.validate(), Error);
  spec = preset_scene("sphere");
  spec.cameras.push_back(CameraPose::look_at(Vec3(0.1, 0, 0), Vec3(1, 0, 0), Vec3::UnitZ()));
  EXPECT_THROW(spec.validate(), Error);
}
