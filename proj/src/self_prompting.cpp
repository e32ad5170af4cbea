#include "segfield/self_prompting.hpp"

#include <algorithm>
#include <exception>

#include "segfield/error.hpp"
#include "segfield/kmeans.hpp"
#include "segfield/mask_ops.hpp"

using nlohmann::json;

namespace segfield {

void SelfPromptConfig::validate() const {
  if (k < 1) throw Error(Errc::invalid_argument, "k must be >= 1");
  if (!(band_lo > 0.0)) throw Error(Errc::invalid_argument, "band_lo must be positive");
  if (band_hi && !(*band_hi > band_lo)) {
    throw Error(Errc::invalid_argument, "band_hi must exceed band_lo");
  }
  if (kmeans_iters < 1) throw Error(Errc::invalid_argument, "kmeans_iters must be >= 1");
}

double SelfPromptConfig::band_hi_for(double max_distance) const {
  return band_hi ? *band_hi : std::max(4.0, 0.05 * max_distance);
}

BoxMask box_to_mask(const ViewImage& view, const std::string& text, BoxDetector& detector,
                    Segmenter& segmenter) {
  const auto boxes = detector.detect_boxes(view, text);
  if (boxes.empty()) {
    throw Error(Errc::not_found,
                "no '" + text + "' detected in view " + std::to_string(view.view_id));
  }
  const auto best = std::max_element(
      boxes.begin(), boxes.end(),
      [](const ScoredBox& a, const ScoredBox& b) { return a.score < b.score; });
  PromptSet prompt;
  prompt.box = best->box;
  BoxMask out;
  out.mask = segmenter.segment(view, prompt);
  out.box = best->box;
  out.detector_score = best->score;
  return out;
}

Raster<float> distance_map(const Mask& mask) {
  if (count_set(mask.bits) == 0) throw Error(Errc::empty_mask, "distance map of an empty mask");
  return distance_to_outside(mask.bits);
}

std::vector<Vec2> edge_band_points(const Raster<float>& dist, double band_lo, double band_hi) {
  std::vector<Vec2> pts;
  float max_d = 0.0f;
  for (int y = 0; y < dist.height(); ++y) {
    for (int x = 0; x < dist.width(); ++x) {
      const double d = dist(x, y);
      max_d = std::max(max_d, dist(x, y));
      if (d >= band_lo && d <= band_hi) pts.emplace_back(x, y);
    }
  }
  if (pts.empty()) {
    throw Error(Errc::band_empty,
                "no pixel at distance [" + std::to_string(band_lo) + ", " +
                    std::to_string(band_hi) + "] from the mask edge (largest distance " +
                    std::to_string(max_d) + "); widen the band, e.g. band_lo <= " +
                    std::to_string(std::max(1.0f, max_d / 2)));
  }
  return pts;
}

KMeansPrompts kmeans_prompts(std::span<const Vec2> points, const SelfPromptConfig& cfg) {
  cfg.validate();
  KMeansPrompts out;
  out.saturated = static_cast<int>(points.size()) < cfg.k;
  if (points.empty()) return out;
  const auto km = kmeans(points, cfg.k, cfg.kmeans_iters, cfg.seed);
  for (const auto m : km.medoids) {
    out.prompts.points.push_back({points[m].x(), points[m].y(), Polarity::positive});
  }
  return out;
}

SelfPromptResult self_prompt_view(const ViewImage& view, const std::string& text,
                                  SegmentationBackend& backend, const SelfPromptConfig& cfg) {
  cfg.validate();
  SelfPromptResult r;
  r.view_id = view.view_id;
  r.detection = box_to_mask(view, text, backend, backend);
  const auto dist = distance_map(r.detection.mask);
  const float max_d = *std::max_element(dist.data().begin(), dist.data().end());
  r.band_lo = cfg.band_lo;
  r.band_hi = cfg.band_hi_for(max_d);
  const auto band = edge_band_points(dist, r.band_lo, r.band_hi);
  auto km = kmeans_prompts(band, cfg);
  r.prompts = std::move(km.prompts);
  r.saturated = km.saturated;
  return r;
}

std::vector<std::string> SelfPromptReport::skipped() const {
  std::vector<std::string> names;
  for (const auto& s : scenes) {
    if (s.status != "ok") names.push_back(s.scene);
  }
  return names;
}

json SelfPromptReport::to_json() const {
  json out = json::array();
  for (const auto& s : scenes) {
    json entry{{"scene", s.scene}, {"status", s.status}};
    if (s.result) {
      json prompts = json::array();
      for (const auto& p : s.result->prompts.points) prompts.push_back({p.u, p.v});
      entry["prompts"] = std::move(prompts);
      entry["detector_score"] = s.result->detection.detector_score;
      entry["view_id"] = s.result->view_id;
      entry["box"] = {s.result->detection.box.u_min, s.result->detection.box.v_min,
                      s.result->detection.box.u_max, s.result->detection.box.v_max};
      if (s.result->saturated) entry["warning"] = "fewer band points than k";
    } else {
      entry["prompts"] = json::array();
      entry["detector_score"] = nullptr;
      entry["message"] = s.message;
    }
    out.push_back(std::move(entry));
  }
  return out;
}

namespace {

SceneOutcome run_scene(const SelfPromptScene& scene, const std::string& text,
                       const SelfPromptConfig& cfg) {
  SceneOutcome out;
  out.scene = scene.name;
  if (!scene.backend) throw Error(Errc::invalid_argument, "scene " + scene.name + " has no backend");
  const ViewImage* best_view = nullptr;
  double best_score = -1.0;
  for (const auto& view : scene.views) {
    const auto boxes = scene.backend->detect_boxes(view, text);
    if (boxes.empty()) continue;
    const double top = std::max_element(boxes.begin(), boxes.end(),
                                        [](const auto& a, const auto& b) {
                                          return a.score < b.score;
                                        })->score;
    if (top > best_score || (top == best_score && view.view_id < best_view->view_id)) {
      best_score = top;
      best_view = &view;
    }
  }
  if (!best_view) {
    out.status = to_string(Errc::not_found);
    out.message = "no '" + text + "' detected in any view";
    return out;
  }
  try {
    out.result = self_prompt_view(*best_view, text, *scene.backend, cfg);
    out.status = "ok";
  } catch (const Error& e) {
    if (classify(e.code()) == ErrorClass::segmenter_transport) throw;
    out.status = to_string(e.code());
    out.message = e.what();
  }
  return out;
}

}  // namespace

SelfPromptReport self_prompt_dataset(std::span<const SelfPromptScene> scenes,
                                     const std::string& text, const SelfPromptConfig& cfg) {
  cfg.validate();
  if (text.empty()) throw Error(Errc::invalid_argument, "detection text must be non-empty");
  SelfPromptReport report;
  report.scenes.resize(scenes.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    try {
      report.scenes[i] = run_scene(scenes[i], text, cfg);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return report;
}

}  // namespace segfield
