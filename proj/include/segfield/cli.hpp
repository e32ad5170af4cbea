#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segfield/occlusion.hpp"
#include "segfield/propagation.hpp"
#include "segfield/radiance_field.hpp"
#include "segfield/segmenter.hpp"
#include "segfield/self_prompting.hpp"

namespace segfield {

struct SynthConfig {
  int n_points = 4000;
  double noise_px = 0.5;
  bool write_depth = true;
};

struct RenderConfig {
  int samples_per_ray = 128;
  int count = 8;
  double orbit_radius = 3.0;
  double elevation_deg = 20.0;
  // Used when no dataset supplies the camera.
  double focal = 150.0;
  int width = 128;
  int height = 128;
};

/// Every module's settings in one file. Unknown keys are rejected; missing
/// keys keep their defaults.
struct PipelineConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  SegmenterHandle segmenter;
  int oracle_boundary_px = 0;
  PropagationConfig propagation;
  OcclusionConfig occlusion;
  SelfPromptConfig self_prompt;
  TrainConfig train;
  RenderConfig render;

  /// Per-module seeds derived from `seed` by fixed offsets.
  void apply_seed();
};

PipelineConfig parse_pipeline_config(const nlohmann::json& j);
PipelineConfig read_pipeline_config(const std::filesystem::path& path);

/// Process exit status for an error class: 2 parse, 3 data integrity,
/// 4 segmenter transport, 5 divergence, 1 otherwise.
int exit_code(ErrorClass cls);

/// Entry point of the `segfield` executable.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace segfield
