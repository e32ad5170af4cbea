#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "segfield/error.hpp"
#include "segfield/mask_ops.hpp"
#include "segfield/propagation.hpp"
#include "segfield/self_prompting.hpp"
#include "segfield/synthetic.hpp"

using namespace segfield;

namespace {

Mask disk_mask(int size, double cx, double cy, double r) {
  Mask m;
  m.bits = BitMask(size, size, 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.bits(x, y) = std::hypot(x - cx, y - cy) <= r;
  }
  m.status = MaskStatus::accepted;
  return m;
}

class FixedDetector final : public SegmentationBackend {
 public:
  explicit FixedDetector(std::vector<ScoredBox> boxes) : boxes_(std::move(boxes)) {}
  std::vector<ScoredBox> detect_boxes(const ViewImage&, const std::string&) override {
    return boxes_;
  }
  Mask segment(const ViewImage&, const PromptSet& p) override {
    last_box = p.box;
    Mask m = disk_mask(32, 16, 16, 8);
    m.score = 1.0;
    return m;
  }
  std::optional<Box> last_box;

 private:
  std::vector<ScoredBox> boxes_;
};

struct SynthScene {
  SceneSpec spec;
  std::vector<ViewImage> views;
  std::map<int, InstanceMap> instances;
  FabricatedCloud fab;
};

SynthScene synth(const SceneSpec& spec) {
  SynthScene s;
  s.spec = spec;
  for (const auto& rv : render_scene(spec)) {
    s.views.push_back(rv.view);
    s.instances[rv.view.view_id] = rv.instances;
  }
  std::vector<RenderedView> rendered;
  for (const auto& v : s.views) rendered.push_back({v, s.instances.at(v.view_id)});
  s.fab = fabricate_sparse_cloud(spec, rendered, 2500, 0.0, 5);
  return s;
}

}  // namespace

TEST(BoxToMask, UsesHighestScoringBox) {
  FixedDetector det({{Box{0, 0, 5, 5}, 0.4}, {Box{8, 8, 24, 24}, 0.9}});
  ViewImage v;
  const auto r = box_to_mask(v, "thing", det, det);
  EXPECT_EQ(r.box, (Box{8, 8, 24, 24}));
  EXPECT_EQ(r.detector_score, 0.9);
  ASSERT_TRUE(det.last_box);
  EXPECT_EQ(*det.last_box, r.box);
}

TEST(BoxToMask, NoBoxesIsNotFound) {
  FixedDetector det({});
  try {
    box_to_mask(ViewImage{}, "thing", det, det);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_found);
  }
}

TEST(BoxToMask, OracleChainGivesExactSilhouette) {
  SceneSpec spec = preset_scene("sphere");
  spec.cameras.resize(1);
  const auto s = synth(spec);
  OracleBackend oracle(s.instances, {{"sphere", 1}});
  const auto r = box_to_mask(s.views[0], "sphere", oracle, oracle);
  EXPECT_EQ(r.mask.bits, instance_mask(s.instances.at(1), 1));
}

TEST(DistanceMap, EmptyMaskRejected) {
  Mask m;
  m.bits = BitMask(4, 4, 0);
  EXPECT_THROW(distance_map(m), Error);
}

TEST(EdgeBand, AnnulusWithinBandAndCountNearPerimeter) {
  const double r = 50;
  const auto dist = distance_map(disk_mask(121, 60, 60, r));
  const auto pts = edge_band_points(dist, 3, 6);
  for (const auto& p : pts) {
    const double d = dist(int(p.x()), int(p.y()));
    EXPECT_GE(d, 3.0);
    EXPECT_LE(d, 6.0);
  }
  // Annulus between radii r-6 and r-3 (distance measured to outside pixels,
  // so the inner edge sits about one pixel deeper); within 20%.
  const double expected = 2 * std::numbers::pi * r * 3.0;
  EXPECT_NEAR(static_cast<double>(pts.size()), expected, 0.2 * expected);
}

TEST(EdgeBand, ThinMaskWithNarrowBandIsEmpty) {
  Mask line;
  line.bits = BitMask(20, 5, 0);
  for (int x = 2; x < 18; ++x) line.bits(x, 2) = 1;
  const auto dist = distance_map(line);
  try {
    edge_band_points(dist, 0.25, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::band_empty);
    EXPECT_NE(std::string(e.what()).find("widen"), std::string::npos);
  }
}

TEST(KMeansPrompts, SingleClusterNearBandCenterline) {
  const auto dist = distance_map(disk_mask(81, 40, 40, 30));
  const auto pts = edge_band_points(dist, 2, 4);
  SelfPromptConfig cfg;
  cfg.k = 1;
  const auto r = kmeans_prompts(pts, cfg);
  ASSERT_EQ(r.prompts.points.size(), 1u);
  // The centroid of an annulus is its center; the medoid is the band point nearest it.
  double best = 1e9;
  for (const auto& p : pts) best = std::min(best, std::hypot(p.x() - 40, p.y() - 40));
  const auto& m = r.prompts.points[0];
  EXPECT_NEAR(std::hypot(m.u - 40, m.v - 40), best, 1e-9);
}

TEST(KMeansPrompts, AnnulusFourPromptsNinetyDegreesApart) {
  const auto dist = distance_map(disk_mask(101, 50, 50, 40));
  const auto pts = edge_band_points(dist, 3, 6);
  SelfPromptConfig cfg;
  cfg.k = 4;
  cfg.seed = 7;
  const auto r = kmeans_prompts(pts, cfg);
  ASSERT_EQ(r.prompts.points.size(), 4u);
  std::vector<double> angles;
  for (const auto& p : r.prompts.points) angles.push_back(std::atan2(p.v - 50, p.u - 50));
  std::sort(angles.begin(), angles.end());
  for (std::size_t i = 0; i < 4; ++i) {
    double gap = (i + 1 < 4 ? angles[i + 1] : angles[0] + 2 * std::numbers::pi) - angles[i];
    EXPECT_NEAR(gap * 180 / std::numbers::pi, 90.0, 15.0);
  }
}

TEST(KMeansPrompts, SaturationReturnsAllPoints) {
  const std::vector<Vec2> pts{{1, 1}, {5, 5}, {9, 1}};
  SelfPromptConfig cfg;
  cfg.k = 3;
  auto r = kmeans_prompts(pts, cfg);
  EXPECT_EQ(r.prompts.points.size(), 3u);
  EXPECT_FALSE(r.saturated);
  cfg.k = 5;
  r = kmeans_prompts(pts, cfg);
  EXPECT_EQ(r.prompts.points.size(), 3u);
  EXPECT_TRUE(r.saturated);
}

TEST(SelfPromptConfig, BandDefaults) {
  SelfPromptConfig cfg;
  EXPECT_EQ(cfg.band_hi_for(20), 4.0);
  EXPECT_EQ(cfg.band_hi_for(200), 10.0);
  cfg.band_hi = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

namespace {

std::vector<SceneSpec> three_sphere_scenes() {
  std::vector<SceneSpec> specs;
  for (int i = 0; i < 3; ++i) {
    SceneSpec spec = preset_scene("floor-sphere");
    spec.cameras.resize(12);
    spec.objects[1].center += Vec3(0.1 * i, -0.1 * i, 0.05 * i);
    spec.objects[1].size = Vec3::Constant(0.45 + 0.05 * i);
    specs.push_back(spec);
  }
  return specs;
}

}  // namespace

TEST(SelfPromptDataset, PromptsInsideMaskAndReproduceMasks) {
  std::vector<SynthScene> data;
  std::vector<std::unique_ptr<OracleBackend>> backends;
  std::vector<SelfPromptScene> scenes;
  for (const auto& spec : three_sphere_scenes()) data.push_back(synth(spec));
  for (std::size_t i = 0; i < data.size(); ++i) {
    backends.push_back(std::make_unique<OracleBackend>(
        data[i].instances, std::map<std::string, int>{{"sphere", 1}}));
    scenes.push_back({"scene" + std::to_string(i), data[i].views, backends.back().get()});
  }
  SelfPromptConfig cfg;
  const auto report = self_prompt_dataset(scenes, "sphere", cfg);
  ASSERT_EQ(report.scenes.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& outcome = report.scenes[i];
    ASSERT_EQ(outcome.status, "ok") << outcome.message;
    const auto& res = *outcome.result;
    EXPECT_EQ(res.prompts.points.size(), 5u);
    const auto& inst = data[i].instances.at(res.view_id);
    const auto dist = distance_map(res.detection.mask);
    for (const auto& p : res.prompts.points) {
      const int x = pixel_index(p.u), y = pixel_index(p.v);
      EXPECT_EQ(inst(x, y), 1);
      EXPECT_GE(dist(x, y), cfg.band_lo);
    }
    const std::vector<ObjectSeed> seeds{{1, res.view_id, res.prompts}};
    const auto prop =
        propagate(data[i].fab.cloud, data[i].views, seeds, *backends[i], PropagationConfig{});
    for (const auto& [view, mask] : prop.masks.at(1)) {
      ASSERT_EQ(mask.status, MaskStatus::accepted);
      EXPECT_GE(mask_iou(mask.bits, instance_mask(data[i].instances.at(view), 1)), 0.99);
    }
  }
  const auto again = self_prompt_dataset(scenes, "sphere", cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(again.scenes[i].result->prompts, report.scenes[i].result->prompts);
  }
}

TEST(SelfPromptDataset, MissingObjectIsSkipped) {
  SceneSpec with = preset_scene("sphere");
  with.cameras.resize(2);
  SceneSpec without = with.without_instance(1);
  const auto a = synth(with);
  const auto b = synth(without);
  OracleBackend ba(a.instances, {{"sphere", 1}});
  OracleBackend bb(b.instances, {{"sphere", 1}});
  const std::vector<SelfPromptScene> scenes{{"has", a.views, &ba}, {"lacks", b.views, &bb}};
  const auto report = self_prompt_dataset(scenes, "sphere", SelfPromptConfig{});
  EXPECT_EQ(report.skipped(), std::vector<std::string>{"lacks"});
  const auto j = report.to_json();
  EXPECT_EQ(j[1]["status"], to_string(Errc::not_found));
  EXPECT_EQ(j[0]["prompts"].size(), 5u);
}
