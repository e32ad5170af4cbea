#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segfield/prompts.hpp"
#include "segfield/segmenter.hpp"

namespace segfield {

struct SelfPromptConfig {
  int k = 5;
  double band_lo = 2.0;
  std::optional<double> band_hi;  // empty = max(4, 5% of the mask's largest distance)
  int kmeans_iters = 25;
  std::uint64_t seed = 0;

  void validate() const;
  double band_hi_for(double max_distance) const;
};

struct BoxMask {
  Mask mask;
  Box box;
  double detector_score = 0.0;
};

/// Highest-scoring detector box for `text`, segmented as a box prompt.
/// Throws not_found when the detector returns nothing.
BoxMask box_to_mask(const ViewImage& view, const std::string& text, BoxDetector& detector,
                    Segmenter& segmenter);

/// Distance from each in-mask pixel to the nearest out-of-mask pixel; 0 outside.
Raster<float> distance_map(const Mask& mask);

/// Pixel centers with band_lo <= dist <= band_hi, in row-major order.
std::vector<Vec2> edge_band_points(const Raster<float>& dist, double band_lo, double band_hi);

struct KMeansPrompts {
  PromptSet prompts;
  bool saturated = false;  // fewer points than k: every point returned
};

/// k-means over the band points; the medoids become positive prompts.
KMeansPrompts kmeans_prompts(std::span<const Vec2> points, const SelfPromptConfig& cfg);

struct SelfPromptResult {
  int view_id = 0;
  PromptSet prompts;
  BoxMask detection;
  double band_lo = 0.0;
  double band_hi = 0.0;
  bool saturated = false;
};

/// Full chain on one view: box, mask, distance map, edge band, k-means.
SelfPromptResult self_prompt_view(const ViewImage& view, const std::string& text,
                                  SegmentationBackend& backend, const SelfPromptConfig& cfg);

struct SelfPromptScene {
  std::string name;
  std::vector<ViewImage> views;
  SegmentationBackend* backend = nullptr;
};

struct SceneOutcome {
  std::string scene;
  std::string status;  // "ok" or the error category that skipped the scene
  std::string message;
  std::optional<SelfPromptResult> result;
};

struct SelfPromptReport {
  std::vector<SceneOutcome> scenes;

  std::vector<std::string> skipped() const;
  nlohmann::json to_json() const;
};

/// Per scene: detect on every view, keep the view with the best box score
/// (ties to the lowest view id) and run the chain there. Scenes where the
/// object is missing or the chain fails are listed, not fatal. Transport
/// failures still propagate.
SelfPromptReport self_prompt_dataset(std::span<const SelfPromptScene> scenes,
                                     const std::string& text, const SelfPromptConfig& cfg);

}  // namespace segfield
