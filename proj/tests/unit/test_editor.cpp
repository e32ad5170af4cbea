#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "segfield/editor.hpp"
#include "segfield/error.hpp"
#include "segfield/mask_ops.hpp"
#include "segfield/synthetic.hpp"

using namespace segfield;

namespace {

// Near-opaque ball of `radius` around the box center, colored by `rgb_pre`.
VoxelField ball_field(double radius, const Vec3& rgb_pre, int res = 32) {
  const Aabb box{Vec3::Constant(-0.6), Vec3::Constant(0.6)};
  auto f = VoxelField::uniform(box, {res, res, res}, -30.0, rgb_pre);
  const Vec3 cell = f.cell_size();
  for (int z = 0; z < res; ++z) {
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const Vec3 p = box.min + Vec3(x, y, z).cwiseProduct(cell);
        f.density[x + res * (y + res * z)] = 2000.0 * (radius - p.norm());
      }
    }
  }
  return f;
}

VoxelField empty_field(const Aabb& box) {
  return VoxelField::uniform(box, {4, 4, 4}, -800.0, Vec3::Zero());
}

const CameraIntrinsics kCam{90, 90, 31.5, 31.5, 64, 64};

CameraPose front_pose() {
  return CameraPose::look_at(Vec3(0, -4, 0), Vec3::Zero(), Vec3::UnitZ());
}

Vec2 opacity_centroid(const FieldImage& img) {
  double sx = 0, sy = 0, sw = 0;
  for (int y = 0; y < img.opacity.height(); ++y) {
    for (int x = 0; x < img.opacity.width(); ++x) {
      const double w = img.opacity(x, y);
      sx += w * x;
      sy += w * y;
      sw += w;
    }
  }
  return Vec2(sx / sw, sy / sw);
}

double max_abs_diff(const FieldImage& a, const FieldImage& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    d = std::max(d, double((a.rgb[i] - b.rgb[i]).cwiseAbs().maxCoeff()));
    d = std::max(d, double(std::abs(a.opacity[i] - b.opacity[i])));
  }
  return d;
}

}  // namespace

TEST(RemovalMasks, ComplementIsInvolution) {
  std::map<int, Mask> masks;
  Mask m;
  m.view_id = 1;
  m.bits = BitMask(8, 6, 0);
  m.bits(2, 3) = m.bits(5, 1) = 1;
  m.status = MaskStatus::accepted;
  masks[1] = m;
  Mask d = m;
  d.view_id = 2;
  d.status = MaskStatus::discarded_occluded;
  masks[2] = d;
  const auto inv = removal_masks(masks);
  EXPECT_EQ(count_set(inv.at(1).bits), 46u);
  EXPECT_EQ(inv.at(2).bits, d.bits);
  EXPECT_EQ(inv.at(2).status, MaskStatus::discarded_occluded);
  EXPECT_EQ(removal_masks(inv).at(1).bits, m.bits);
}

TEST(RemovalMasks, ObjectPixelsNeverSampled) {
  SceneSpec spec = preset_scene("floor-sphere");
  spec.cameras.resize(2);
  const auto rendered = render_scene(spec);
  const auto fab = fabricate_sparse_cloud(spec, rendered, 2000, 0.0, 2);
  std::vector<ViewImage> views;
  std::map<int, Mask> masks;
  for (const auto& rv : rendered) {
    views.push_back(rv.view);
    Mask m;
    m.view_id = rv.view.view_id;
    m.bits = instance_mask(rv.instances, 1);
    m.status = MaskStatus::accepted;
    masks[m.view_id] = m;
  }
  TrainConfig cfg;
  cfg.out_of_mask_fraction = 0.0;
  cfg.batch_rays = 512;
  const auto inv = removal_masks(masks);
  BatchSampler sampler(views, inv, fab.cloud, object_aabb(fab.cloud, cfg), cfg);
  std::set<std::tuple<double, double, double>> allowed;
  for (const auto& p : sampler.inside()) {
    EXPECT_EQ(rendered[p.view_id - 1].instances(p.x, p.y) == 1, false);
    allowed.insert({p.ray.direction.x(), p.ray.direction.y(), p.ray.direction.z()});
  }
  for (int b = 0; b < 10; ++b) {
    const auto batch = sampler.next();
    for (const auto& r : batch.rays) {
      EXPECT_TRUE(allowed.count({r.direction.x(), r.direction.y(), r.direction.z()}));
    }
  }
}

TEST(Compose, EmptyBackgroundIdentityMatchesObject) {
  const auto obj = ball_field(0.4, Vec3(2, -1, 0));
  const auto bg = empty_field(Aabb{Vec3::Constant(-2), Vec3::Constant(2)});
  const auto comp = compose(bg, obj, RigidTransform{});
  const auto a = render_view(comp, kCam, front_pose(), 64);
  const auto b = render_view(obj, kCam, front_pose(), 64);
  EXPECT_LE(max_abs_diff(a, b), 1e-6);
}

TEST(Compose, ZeroDensityObjectIsNoOp) {
  auto bg = ball_field(0.3, Vec3(0, 1, 0));
  bg.aabb = Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  const auto obj = empty_field(Aabb{Vec3::Constant(-0.5), Vec3::Constant(0.5)});
  RigidTransform xf;
  xf.translation = Vec3(0.2, -0.3, 0.1);
  xf.rotation = RigidTransform::axis_angle(Vec3(0.1, 0.4, -0.2));
  const auto comp = compose(bg, obj, xf);
  const auto a = render_view(comp, kCam, front_pose(), 64);
  const auto b = render_view(bg, kCam, front_pose(), 64);
  EXPECT_LE(max_abs_diff(a, b), 1e-6);
}

TEST(Compose, TranslationShiftsSilhouetteCentroid) {
  const auto obj = ball_field(0.3, Vec3::Zero());
  const auto bg = empty_field(Aabb{Vec3::Constant(-2), Vec3::Constant(2)});
  const Vec3 t(0.35, 0.0, -0.2);
  RigidTransform xf;
  xf.translation = t;
  const auto before = opacity_centroid(render_view(compose(bg, obj, {}), kCam, front_pose(), 64));
  const auto after = opacity_centroid(render_view(compose(bg, obj, xf), kCam, front_pose(), 64));
  const auto p0 = project_point(Vec3::Zero(), kCam, front_pose());
  const auto p1 = project_point(t, kCam, front_pose());
  const Vec2 expected(p1->u - p0->u, p1->v - p0->v);
  EXPECT_LE((after - before - expected).norm(), 1.0);
  EXPECT_GT(expected.norm(), 5.0);
}

TEST(Compose, ChannelSwapTurnsRedGreen) {
  const auto obj = ball_field(0.3, Vec3(6, -6, -6));
  auto bg = ball_field(0.3, Vec3(-6, -6, 6));
  bg.aabb = Aabb{Vec3(-1.5, 1.0, -0.6), Vec3(-0.3, 2.2, 0.6)};
  RigidTransform xf;
  xf.color_matrix << 0, 1, 0, 1, 0, 0, 0, 0, 1;
  xf.translation = Vec3(0.5, 0, 0);
  const auto plain = render_view(compose(bg, obj, RigidTransform{.translation = xf.translation}),
                                 kCam, front_pose(), 64);
  const auto swapped = render_view(compose(bg, obj, xf), kCam, front_pose(), 64);
  const auto obj_px = project_point(xf.translation, kCam, front_pose());
  const Eigen::Vector3f c = swapped.rgb(pixel_index(obj_px->u), pixel_index(obj_px->v));
  EXPECT_GT(c.y(), 0.9f);
  EXPECT_LT(c.x(), 0.05f);
  const auto bg_px = project_point(Vec3(-0.9, 1.6, 0), kCam, front_pose());
  const int bx = pixel_index(bg_px->u), by = pixel_index(bg_px->v);
  EXPECT_EQ(swapped.rgb(bx, by), plain.rgb(bx, by));
  EXPECT_GT(swapped.rgb(bx, by).z(), 0.9f);
}

TEST(Compose, QueryInvertsTheTransform) {
  const auto obj = ball_field(0.4, Vec3(1, 0, -1));
  const auto bg = empty_field(Aabb{Vec3::Constant(-3), Vec3::Constant(3)});
  RigidTransform xf;
  xf.rotation = RigidTransform::axis_angle(Vec3(0.3, -0.2, 0.9));
  xf.translation = Vec3(0.4, 0.1, -0.3);
  xf.scale = 1.5;
  const auto comp = compose(bg, obj, xf);
  for (const Vec3& x : {Vec3(0.1, 0.2, -0.1), Vec3(-0.3, 0.05, 0.35), Vec3(0.0, 0.0, 0.0)}) {
    double s_obj, s_comp;
    Vec3 c_obj, c_comp;
    obj.query(x, s_obj, c_obj);
    comp.query(xf.apply(x), s_comp, c_comp);
    EXPECT_NEAR(s_comp, s_obj / xf.scale, 1e-9 * std::max(1.0, s_obj));
    EXPECT_LT((c_comp - c_obj).norm(), 1e-9);
  }
}

TEST(Compose, DegenerateTransformRejected) {
  const auto f = empty_field(Aabb{Vec3::Zero(), Vec3::Ones()});
  RigidTransform xf;
  xf.scale = 0.0;
  EXPECT_THROW(compose(f, f, xf), Error);
  xf = {};
  xf.rotation(0, 0) = 2.0;
  EXPECT_THROW(compose(f, f, xf), Error);
}

TEST(EditScript, ParsesAllFields) {
  const auto j = nlohmann::json::parse(R"({
    "background_ckpt": "bg.sgvf", "object_ckpt": "obj.sgvf",
    "rotation": [0, 0, 1.5707963267948966], "translation": [1, 2, 3], "scale": 0.5,
    "color_map": {"matrix": [[0,1,0],[1,0,0],[0,0,1]], "offset": [0.1, 0, 0]}})");
  const auto s = parse_edit_script(j, "/data");
  EXPECT_EQ(s.object_ckpt, std::filesystem::path("/data/obj.sgvf"));
  EXPECT_EQ(*s.background_ckpt, std::filesystem::path("/data/bg.sgvf"));
  EXPECT_LT((s.xform.apply(Vec3(1, 0, 0)) - Vec3(1, 2.5, 3)).norm(), 1e-12);
  EXPECT_EQ(s.xform.color_offset, Vec3(0.1, 0, 0));
  EXPECT_EQ(s.xform.color_matrix(0, 1), 1.0);
}

TEST(EditScript, RejectsUnknownKeysAndBadValues) {
  const auto bad = [](const char* text) {
    try {
      parse_edit_script(nlohmann::json::parse(text), ".");
      return Errc::io;
    } catch (const Error& e) {
      return e.code();
    }
  };
  EXPECT_EQ(bad(R"({"object_ckpt": "o", "shear": 1})"), Errc::parse);
  EXPECT_EQ(bad(R"({"object_ckpt": "o", "translation": [1, 2]})"), Errc::parse);
  EXPECT_EQ(bad(R"({"object_ckpt": "o", "scale": "big"})"), Errc::parse);
  EXPECT_EQ(bad(R"({"translation": [1, 2, 3]})"), Errc::parse);
  EXPECT_EQ(bad(R"({"object_ckpt": "o", "scale": -1})"), Errc::invalid_argument);
}
