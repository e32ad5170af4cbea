#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "segfield/colmap_io.hpp"
#include "segfield/error.hpp"
#include "segfield/scene_model.hpp"

namespace segfield {

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 extent() const { return max - min; }
  double volume() const { return extent().prod(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  void validate() const;
};

/// Slab test. Returns [t_enter, t_exit] clipped to [ray.near, ray.far], or
/// nothing when the clipped interval is empty.
std::optional<std::pair<double, double>> intersect(const Aabb& box, const Ray& ray);

double softplus(double x);
double sigmoid(double x);
/// Pre-activation value whose softplus is `sigma` (> 0).
double inverse_softplus(double sigma);

/// Density and color grids sampled at the vertices of a regular lattice
/// spanning the box; values between vertices are trilinear. Grids hold
/// pre-activation values: sigma = softplus(d), color = sigmoid(c).
struct VoxelField {
  Aabb aabb;
  std::array<int, 3> resolution{2, 2, 2};
  std::vector<double> density;  // x fastest, then y, then z
  std::vector<double> color;    // 3 per vertex, same order

  static VoxelField uniform(const Aabb& aabb, std::array<int, 3> resolution,
                            double density_pre, const Vec3& color_pre);

  std::size_t vertex_count() const {
    return static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2];
  }
  Vec3 cell_size() const;
  bool finite() const;
  void validate() const;

  /// Activated density and color at `p`; zero density outside the box.
  void query(const Vec3& p, double& sigma, Vec3& rgb) const;
};

/// Lattice cells needed to cover `box` at cubic cells of side `cell`.
std::uint64_t voxel_count(const Aabb& box, double cell);

struct RayResult {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;  // distance along the ray
  double opacity = 0.0;
};

/// Evenly spaced samples over the ray's intersection with the box, at bin
/// centers. Throws non_intersecting_ray when the ray misses the box.
RayResult render_ray(const VoxelField& field, const Ray& ray, int n_samples);

/// A field placed in the world: x_world = scale * rotation * x_local + translation,
/// colors passed through an affine map clamped to [0, 1].
struct PlacedField {
  const VoxelField* field = nullptr;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
  Mat3 color_matrix = Mat3::Identity();
  Vec3 color_offset = Vec3::Zero();
};

/// Renders several placed fields as one medium: each is sampled over its own
/// box interval and the samples are composited in depth order. Rays missing
/// every box come back empty.
RayResult render_ray(std::span<const PlacedField> fields, const Ray& ray, int n_samples);

struct FieldImage {
  RgbImage rgb;      // on black
  DepthMap depth;    // z-depth, 0 where opacity is 0
  Raster<float> opacity;
};

FieldImage render_view(const VoxelField& field, const CameraIntrinsics& intrinsics,
                       const CameraPose& pose, int n_samples);
FieldImage render_view(std::span<const PlacedField> fields, const CameraIntrinsics& intrinsics,
                       const CameraPose& pose, int n_samples);

/// 10 log10(1 / MSE) over all pixels and channels.
double psnr(const RgbImage& a, const RgbImage& b);
/// Ground truth with everything outside `mask` set to black.
RgbImage masked_image(const RgbImage& rgb, const BitMask& mask);

struct RayBatch {
  std::vector<Ray> rays;
  std::vector<Vec3> gt_color;
  std::vector<std::optional<double>> gt_depth;  // distance along the ray
  std::vector<double> weight;
  std::vector<Vec3> background;  // empty = black; else one per ray, composited behind the field

  std::size_t size() const { return rays.size(); }
  bool empty() const { return rays.empty(); }
  void push(const Ray& ray, const Vec3& color, std::optional<double> depth = {},
            double w = 1.0);
  void validate() const;
};

struct PruneResult {
  RayBatch kept;                   // near/far clipped to the box interval
  std::vector<std::size_t> index;  // position of each kept ray in the input
};

PruneResult prune_rays(const RayBatch& batch, const Aabb& box);

enum class DepthSource { automatic, dense, sparse, none };

struct TrainConfig {
  double lambda_d = 0.1;
  int iters = 600;
  int batch_rays = 4096;
  double lr_density = 1.0;
  double lr_color = 0.1;
  int samples_per_ray = 64;
  std::optional<double> near;  // empty = 0.05 before box clipping
  std::optional<double> far;   // empty = 100
  double aabb_pad = 0.10;
  double outlier_trim = 0.01;
  int grid_resolution = 64;
  double out_of_mask_fraction = 0.25;
  double sparse_depth_fraction = 0.10;
  bool random_background = true;  // out-of-mask rays then target their own background
  DepthSource depth_source = DepthSource::automatic;
  double density_init = -5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  std::uint64_t seed = 0;

  void validate() const;
  double near_or_default() const { return near.value_or(0.05); }
  double far_or_default() const { return far.value_or(100.0); }
};

/// Per-axis [p, 1 - p] percentile box of the cloud (p = outlier_trim),
/// padded by aabb_pad of the extent on every side.
Aabb object_aabb(const SparseCloud& cloud, const TrainConfig& cfg);

struct LossResult {
  double total = 0.0;
  double l_rgb = 0.0;
  double l_depth = 0.0;
  std::size_t depth_rays = 0;
  std::vector<double> grad_density;  // empty when gradients were not requested
  std::vector<double> grad_color;
};

/// l_rgb: weighted mean over rays of the squared color error (summed over
/// channels), the rendered color composited over the ray's background. l_depth: mean squared depth error over rays with a depth target.
/// total = l_rgb + lambda_d * l_depth. `offsets` (one per ray, in [0, 1))
/// shift every sample within its bin; empty means bin centers. Rays that miss
/// the box render empty.
LossResult loss(const VoxelField& field, const RayBatch& batch, const TrainConfig& cfg,
                bool want_gradients = true, std::span<const double> offsets = {});

/// Draws training batches from accepted masks: in-mask pixels carry their
/// color, out-of-mask pixels whose rays meet the box carry the background
/// (black, or a random color per ray). Every ray is pruned against the box
/// before it enters the pool.
class BatchSampler {
 public:
  BatchSampler(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
               const SparseCloud& object_cloud, const Aabb& box, const TrainConfig& cfg);

  RayBatch next();
  /// Per-ray sample offsets for the batch most recently returned by next().
  const std::vector<double>& offsets() const { return offsets_; }

  std::size_t in_mask_rays() const { return inside_.size(); }
  std::size_t out_of_mask_rays() const { return outside_.size(); }
  std::size_t depth_rays() const { return depth_.size(); }
  DepthSource depth_mode() const { return mode_; }
  const std::vector<int>& view_ids() const { return view_ids_; }

  struct PooledRay {
    Ray ray;
    Vec3 color;
    std::optional<double> depth;
    int view_id = 0;
    int x = 0;
    int y = 0;
  };
  const std::vector<PooledRay>& inside() const { return inside_; }
  const std::vector<PooledRay>& outside() const { return outside_; }
  const std::vector<PooledRay>& depth_pool() const { return depth_; }

 private:
  TrainConfig cfg_;
  DepthSource mode_ = DepthSource::none;
  std::vector<int> view_ids_;
  std::vector<PooledRay> inside_;
  std::vector<PooledRay> outside_;
  std::vector<PooledRay> depth_;
  std::vector<double> offsets_;
  std::mt19937_64 rng_;
};

struct TrainLogEntry {
  int iter = 0;
  double l_rgb = 0.0;
  double l_depth = 0.0;
  std::optional<double> psnr;
};

void write_log_line(std::ostream& out, const TrainLogEntry& entry);

struct EvalView {
  ViewImage view;
  BitMask mask;
};

struct TrainResult {
  VoxelField field;
  std::vector<TrainLogEntry> log;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int iter, VoxelField last_good)
      : Error(Errc::divergence,
              "training diverged at iteration " + std::to_string(iter)),
        iter_(iter), last_good_(std::move(last_good)) {}

  int iter() const noexcept { return iter_; }
  const VoxelField& last_good() const noexcept { return last_good_; }

 private:
  int iter_;
  VoxelField last_good_;
};

/// Fits a field to the accepted masks with Adam. The held-out view, when
/// given, is rendered every 10% of the iterations and its PSNR logged. Log
/// lines are also streamed to `jsonl` when non-null. Throws TrainingDiverged
/// carrying the last finite field.
TrainResult train(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
                  const SparseCloud& object_cloud, const TrainConfig& cfg,
                  const EvalView* held_out = nullptr, std::ostream* jsonl = nullptr);

/// Same, on a box chosen by the caller.
TrainResult train_in_box(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
                         const SparseCloud& object_cloud, const Aabb& box,
                         const TrainConfig& cfg, const EvalView* held_out = nullptr,
                         std::ostream* jsonl = nullptr);

/// Binary checkpoint: "SGVF", uint32 version, int32 resolution[3],
/// float32 aabb[6], float32 density grid, float32 color grid (little-endian).
void save_field(const std::filesystem::path& path, const VoxelField& field);
VoxelField load_field(const std::filesystem::path& path);

}  // namespace segfield
