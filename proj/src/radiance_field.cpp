#include "segfield/radiance_field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

namespace segfield {

void Aabb::validate() const {
  if (!min.allFinite() || !max.allFinite()) throw Error(Errc::invalid_argument, "box not finite");
  if (!(min.array() < max.array()).all()) {
    throw Error(Errc::degenerate_box, "box has zero or negative extent");
  }
}

std::optional<std::pair<double, double>> intersect(const Aabb& box, const Ray& ray) {
  double t0 = ray.near;
  double t1 = ray.far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (d == 0.0) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - o) / d;
    double tb = (box.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double inverse_softplus(double sigma) {
  if (!(sigma > 0.0)) throw Error(Errc::invalid_argument, "inverse_softplus needs sigma > 0");
  return sigma > 30.0 ? sigma : std::log(std::expm1(sigma));
}

VoxelField VoxelField::uniform(const Aabb& aabb, std::array<int, 3> resolution,
                               double density_pre, const Vec3& color_pre) {
  VoxelField f;
  f.aabb = aabb;
  f.resolution = resolution;
  const std::size_t n = f.vertex_count();
  f.density.assign(n, density_pre);
  f.color.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) f.color[3 * i + c] = color_pre[c];
  }
  f.validate();
  return f;
}

Vec3 VoxelField::cell_size() const {
  const Vec3 e = aabb.extent();
  return Vec3(e.x() / (resolution[0] - 1), e.y() / (resolution[1] - 1),
              e.z() / (resolution[2] - 1));
}

bool VoxelField::finite() const {
  const auto ok = [](double v) { return std::isfinite(v); };
  return std::all_of(density.begin(), density.end(), ok) &&
         std::all_of(color.begin(), color.end(), ok);
}

void VoxelField::validate() const {
  aabb.validate();
  for (int r : resolution) {
    if (r < 2) throw Error(Errc::invalid_argument, "grid resolution must be >= 2 per axis");
  }
  if (density.size() != vertex_count() || color.size() != 3 * vertex_count()) {
    throw Error(Errc::dimension_mismatch, "grid sizes do not match the resolution");
  }
}

namespace {

// Trilinear stencil of one position: base vertex plus fractional offsets.
struct Lattice {
  Vec3 origin;
  Vec3 inv_cell;
  int n[3];
  std::size_t sy, sz;

  explicit Lattice(const VoxelField& f)
      : origin(f.aabb.min), n{f.resolution[0], f.resolution[1], f.resolution[2]} {
    const Vec3 c = f.cell_size();
    inv_cell = Vec3(1.0 / c.x(), 1.0 / c.y(), 1.0 / c.z());
    sy = static_cast<std::size_t>(n[0]);
    sz = sy * static_cast<std::size_t>(n[1]);
  }

  void locate(const Vec3& p, std::size_t& base, double fr[3]) const {
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a) {
      double g = (p[a] - origin[a]) * inv_cell[a];
      g = std::clamp(g, 0.0, static_cast<double>(n[a] - 1));
      const int i = std::min(static_cast<int>(g), n[a] - 2);
      idx[a] = static_cast<std::size_t>(i);
      fr[a] = g - i;
    }
    base = idx[0] + idx[1] * sy + idx[2] * sz;
  }

  void corners(std::size_t base, const double fr[3], std::size_t idx[8], double w[8]) const {
    const double gx[2] = {1.0 - fr[0], fr[0]};
    const double gy[2] = {1.0 - fr[1], fr[1]};
    const double gz[2] = {1.0 - fr[2], fr[2]};
    int k = 0;
    for (int z = 0; z < 2; ++z) {
      for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x, ++k) {
          idx[k] = base + x + y * sy + z * sz;
          w[k] = gx[x] * gy[y] * gz[z];
        }
      }
    }
  }
};

struct RawSample {
  double s;     // density pre-activation
  double k[3];  // color pre-activation
};

RawSample sample_raw(const VoxelField& f, const Lattice& lat, const Vec3& p, std::size_t& base,
                     double fr[3]) {
  lat.locate(p, base, fr);
  std::size_t idx[8];
  double w[8];
  lat.corners(base, fr, idx, w);
  RawSample r{0.0, {0.0, 0.0, 0.0}};
  for (int i = 0; i < 8; ++i) {
    r.s += w[i] * f.density[idx[i]];
    const double* c = &f.color[3 * idx[i]];
    r.k[0] += w[i] * c[0];
    r.k[1] += w[i] * c[1];
    r.k[2] += w[i] * c[2];
  }
  return r;
}

}  // namespace

void VoxelField::query(const Vec3& p, double& sigma, Vec3& rgb) const {
  if (!aabb.contains(p)) {
    sigma = 0.0;
    rgb = Vec3::Zero();
    return;
  }
  const Lattice lat(*this);
  std::size_t base;
  double fr[3];
  const RawSample r = sample_raw(*this, lat, p, base, fr);
  sigma = softplus(r.s);
  rgb = Vec3(sigmoid(r.k[0]), sigmoid(r.k[1]), sigmoid(r.k[2]));
}

std::uint64_t voxel_count(const Aabb& box, double cell) {
  if (!(cell > 0.0)) throw Error(Errc::invalid_argument, "cell size must be positive");
  std::uint64_t n = 1;
  for (int a = 0; a < 3; ++a) {
    n *= static_cast<std::uint64_t>(std::max(1.0, std::ceil(box.extent()[a] / cell - 1e-9)));
  }
  return n;
}

namespace {

struct ShadedSample {
  double t;
  double alpha;
  Vec3 rgb;
};

// Samples of one placed field along a world ray, appended in increasing t.
void collect_samples(const PlacedField& pf, const Ray& ray, int n, std::vector<ShadedSample>& out) {
  const VoxelField& f = *pf.field;
  const Mat3 rt = pf.rotation.transpose();
  Ray local = ray;
  local.origin = rt * (ray.origin - pf.translation) / pf.scale;
  local.direction = rt * ray.direction / pf.scale;
  const auto hit = intersect(f.aabb, local);
  if (!hit) return;
  const auto [t0, t1] = *hit;
  const double dt = (t1 - t0) / n;
  const double dist = dt * local.direction.norm();
  const Lattice lat(f);
  for (int j = 0; j < n; ++j) {
    const double t = t0 + (j + 0.5) * dt;
    std::size_t base;
    double fr[3];
    const RawSample r = sample_raw(f, lat, local.at(t), base, fr);
    const double sigma = softplus(r.s);
    Vec3 c(sigmoid(r.k[0]), sigmoid(r.k[1]), sigmoid(r.k[2]));
    c = (pf.color_matrix * c + pf.color_offset).cwiseMax(0.0).cwiseMin(1.0);
    out.push_back({t, 1.0 - std::exp(-sigma * dist), c});
  }
}

RayResult composite(const std::vector<ShadedSample>& samples) {
  RayResult r;
  double T = 1.0;
  double depth_sum = 0.0;
  for (const auto& s : samples) {
    const double w = T * s.alpha;
    r.color += w * s.rgb;
    r.opacity += w;
    depth_sum += w * s.t;
    T *= 1.0 - s.alpha;
  }
  constexpr double eps = 1e-10;
  r.depth = r.opacity > 0.0 ? depth_sum / std::max(r.opacity, eps) : 0.0;
  return r;
}

}  // namespace

RayResult render_ray(std::span<const PlacedField> fields, const Ray& ray, int n_samples) {
  if (n_samples < 1) throw Error(Errc::invalid_argument, "n_samples must be >= 1");
  thread_local std::vector<ShadedSample> samples;
  samples.clear();
  for (const auto& pf : fields) {
    if (!pf.field) throw Error(Errc::invalid_argument, "placed field without a grid");
    if (!(pf.scale > 0.0)) throw Error(Errc::invalid_argument, "field scale must be positive");
    collect_samples(pf, ray, n_samples, samples);
  }
  if (fields.size() > 1) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const ShadedSample& a, const ShadedSample& b) { return a.t < b.t; });
  }
  return composite(samples);
}

RayResult render_ray(const VoxelField& field, const Ray& ray, int n_samples) {
  if (!intersect(field.aabb, ray)) {
    throw Error(Errc::non_intersecting_ray, "ray does not meet the field's box");
  }
  const PlacedField pf{&field};
  return render_ray(std::span<const PlacedField>(&pf, 1), ray, n_samples);
}

FieldImage render_view(std::span<const PlacedField> fields, const CameraIntrinsics& intrinsics,
                       const CameraPose& pose, int n_samples) {
  intrinsics.validate();
  FieldImage img;
  img.rgb = RgbImage(intrinsics.width, intrinsics.height, Eigen::Vector3f::Zero());
  img.depth = DepthMap(intrinsics.width, intrinsics.height, 0.0f);
  img.opacity = Raster<float>(intrinsics.width, intrinsics.height, 0.0f);
#pragma omp parallel for schedule(dynamic)
  for (int y = 0; y < intrinsics.height; ++y) {
    for (int x = 0; x < intrinsics.width; ++x) {
      const Ray ray = ray_for_pixel(x, y, intrinsics, pose, 0.05, 100.0);
      const RayResult r = render_ray(fields, ray, n_samples);
      img.rgb(x, y) = r.color.cast<float>();
      img.opacity(x, y) = static_cast<float>(r.opacity);
      if (r.opacity > 0.0) {
        img.depth(x, y) = static_cast<float>(r.depth * axis_cosine(x, y, intrinsics));
      }
    }
  }
  return img;
}

FieldImage render_view(const VoxelField& field, const CameraIntrinsics& intrinsics,
                       const CameraPose& pose, int n_samples) {
  const PlacedField pf{&field};
  return render_view(std::span<const PlacedField>(&pf, 1), intrinsics, pose, n_samples);
}

double psnr(const RgbImage& a, const RgbImage& b) {
  if (!a.same_shape(b.width(), b.height()) || a.empty()) {
    throw Error(Errc::dimension_mismatch, "psnr needs two images of equal size");
  }
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    se += (a[i].cast<double>() - b[i].cast<double>()).squaredNorm();
  }
  const double mse = se / (3.0 * static_cast<double>(a.size()));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

RgbImage masked_image(const RgbImage& rgb, const BitMask& mask) {
  if (!rgb.same_shape(mask.width(), mask.height())) {
    throw Error(Errc::dimension_mismatch, "mask and image differ in size");
  }
  RgbImage out(rgb.width(), rgb.height(), Eigen::Vector3f::Zero());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    if (mask[i]) out[i] = rgb[i];
  }
  return out;
}

void RayBatch::push(const Ray& ray, const Vec3& color, std::optional<double> depth, double w) {
  rays.push_back(ray);
  gt_color.push_back(color);
  gt_depth.push_back(depth);
  weight.push_back(w);
}

void RayBatch::validate() const {
  const std::size_t n = rays.size();
  if (gt_color.size() != n || gt_depth.size() != n || weight.size() != n ||
      (!background.empty() && background.size() != n)) {
    throw Error(Errc::dimension_mismatch, "ray batch arrays differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (gt_depth[i] && !(*gt_depth[i] > 0.0)) {
      throw Error(Errc::invalid_argument, "depth targets must be positive");
    }
    if (!(weight[i] >= 0.0)) throw Error(Errc::invalid_argument, "ray weights must be >= 0");
  }
}

PruneResult prune_rays(const RayBatch& batch, const Aabb& box) {
  batch.validate();
  PruneResult out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto hit = intersect(box, batch.rays[i]);
    if (!hit) continue;
    Ray r = batch.rays[i];
    r.near = hit->first;
    r.far = hit->second;
    out.kept.push(r, batch.gt_color[i], batch.gt_depth[i], batch.weight[i]);
    out.index.push_back(i);
  }
  return out;
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::invalid_argument, what);
  };
  need(lambda_d >= 0.0, "lambda_d must be >= 0");
  need(iters >= 0, "iters must be >= 0");
  need(batch_rays >= 1, "batch_rays must be >= 1");
  need(lr_density > 0.0 && lr_color > 0.0, "learning rates must be positive");
  need(samples_per_ray >= 2, "samples_per_ray must be >= 2");
  need(near_or_default() >= 0.0 && near_or_default() < far_or_default(),
       "near/far must satisfy 0 <= near < far");
  need(aabb_pad >= 0.0, "aabb_pad must be >= 0");
  need(outlier_trim >= 0.0 && outlier_trim < 0.5, "outlier_trim must lie in [0, 0.5)");
  need(grid_resolution >= 2, "grid_resolution must be >= 2");
  need(out_of_mask_fraction >= 0.0 && out_of_mask_fraction < 1.0,
       "out_of_mask_fraction must lie in [0, 1)");
  need(sparse_depth_fraction >= 0.0 && sparse_depth_fraction + out_of_mask_fraction < 1.0,
       "sparse_depth_fraction plus out_of_mask_fraction must stay below 1");
  need(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
       "Adam betas must lie in [0, 1)");
}

Aabb object_aabb(const SparseCloud& cloud, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = cloud.points.size();
  if (n < 2) {
    throw Error(Errc::insufficient_points,
                "object box needs at least 2 points, got " + std::to_string(n));
  }
  Aabb box;
  std::vector<double> coord(n);
  for (int a = 0; a < 3; ++a) {
    std::size_t i = 0;
    for (const auto& [id, p] : cloud.points) coord[i++] = p.xyz[a];
    std::sort(coord.begin(), coord.end());
    const auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(n - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, n - 1);
      return coord[lo] + (pos - lo) * (coord[hi] - coord[lo]);
    };
    box.min[a] = quantile(cfg.outlier_trim);
    box.max[a] = quantile(1.0 - cfg.outlier_trim);
  }
  const Vec3 e = box.extent();
  if (!(e.array() > 0.0).all()) {
    throw Error(Errc::degenerate_box, "object points span zero extent on some axis");
  }
  box.min -= cfg.aabb_pad * e;
  box.max += cfg.aabb_pad * e;
  return box;
}

namespace {

// One sample's contribution to the grid gradients.
struct GradRecord {
  std::size_t base;
  double fr[3];
  double gs;
  double gk[3];
};

struct RayTrace {
  double err_rgb = 0.0;
  double err_depth = 0.0;
  bool has_depth = false;
};

}  // namespace

LossResult loss(const VoxelField& field, const RayBatch& batch, const TrainConfig& cfg,
                bool want_gradients, std::span<const double> offsets) {
  batch.validate();
  if (batch.empty()) throw Error(Errc::invalid_argument, "loss needs a non-empty batch");
  if (!offsets.empty() && offsets.size() != batch.size()) {
    throw Error(Errc::dimension_mismatch, "one sample offset per ray expected");
  }
  const int n = cfg.samples_per_ray;
  const std::size_t rays = batch.size();
  const Lattice lat(field);

  double weight_sum = 0.0;
  std::size_t depth_rays = 0;
  for (std::size_t i = 0; i < rays; ++i) {
    weight_sum += batch.weight[i];
    if (batch.gt_depth[i]) ++depth_rays;
  }
  const double rgb_scale = weight_sum > 0.0 ? 1.0 / weight_sum : 0.0;
  const double depth_scale = depth_rays > 0 ? cfg.lambda_d / static_cast<double>(depth_rays) : 0.0;

  std::vector<RayTrace> traces(rays);
  std::vector<GradRecord> records;
  std::vector<int> record_count;
  if (want_gradients) {
    records.resize(rays * static_cast<std::size_t>(n));
    record_count.assign(rays, 0);
  }

#pragma omp parallel
  {
    std::vector<double> sigma(n), dsig(n), alpha(n), T(n + 1), w(n), ts(n);
    std::vector<Vec3> c(n);
    std::vector<std::size_t> base(n);
    std::vector<std::array<double, 3>> fr(n);
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < rays; ++i) {
      const Ray& ray = batch.rays[i];
      RayTrace& tr = traces[i];
      const Vec3& target = batch.gt_color[i];
      const Vec3 bg = batch.background.empty() ? Vec3::Zero() : batch.background[i];
      const auto hit = intersect(field.aabb, ray);
      if (!hit) {
        tr.err_rgb = (bg - target).squaredNorm();
        if (batch.gt_depth[i]) {
          tr.has_depth = true;
          tr.err_depth = *batch.gt_depth[i] * *batch.gt_depth[i];
        }
        continue;
      }
      const auto [t0, t1] = *hit;
      const double dt = (t1 - t0) / n;
      const double delta = dt * ray.direction.norm();
      const double off = offsets.empty() ? 0.5 : offsets[i];
      Vec3 C = Vec3::Zero();
      double A = 0.0, Dn = 0.0;
      T[0] = 1.0;
      for (int j = 0; j < n; ++j) {
        ts[j] = t0 + (j + off) * dt;
        const RawSample r = sample_raw(field, lat, ray.at(ts[j]), base[j], fr[j].data());
        sigma[j] = softplus(r.s);
        dsig[j] = sigmoid(r.s);
        c[j] = Vec3(sigmoid(r.k[0]), sigmoid(r.k[1]), sigmoid(r.k[2]));
        const double e = std::exp(-sigma[j] * delta);
        alpha[j] = 1.0 - e;
        w[j] = T[j] * alpha[j];
        T[j + 1] = T[j] * e;
        C += w[j] * c[j];
        A += w[j];
        Dn += w[j] * ts[j];
      }
      constexpr double eps = 1e-10;
      const double A_eff = std::max(A, eps);
      const double depth = Dn / A_eff;
      const Vec3 diff = C + (1.0 - A) * bg - target;
      tr.err_rgb = diff.squaredNorm();
      double gD = 0.0;
      if (batch.gt_depth[i]) {
        tr.has_depth = true;
        const double dd = depth - *batch.gt_depth[i];
        tr.err_depth = dd * dd;
        gD = 2.0 * depth_scale * dd;
      }
      if (!want_gradients) continue;
      const Vec3 gC = 2.0 * rgb_scale * batch.weight[i] * diff;
      const double T_end = T[n];
      Vec3 Sc = Vec3::Zero();
      double St = 0.0;
      GradRecord* out = &records[i * static_cast<std::size_t>(n)];
      for (int j = n - 1; j >= 0; --j) {
        const double dC_common = T[j + 1];
        const Vec3 dC = delta * (dC_common * c[j] - Sc - T_end * bg);
        double gsigma = gC.dot(dC);
        if (gD != 0.0) {
          const double dA = delta * T_end;
          const double dDn = delta * (T[j + 1] * ts[j] - St);
          const double ddepth = A > eps ? (dDn - depth * dA) / A : dDn / eps;
          gsigma += gD * ddepth;
        }
        GradRecord& g = out[j];
        g.base = base[j];
        g.fr[0] = fr[j][0];
        g.fr[1] = fr[j][1];
        g.fr[2] = fr[j][2];
        g.gs = gsigma * dsig[j];
        for (int ch = 0; ch < 3; ++ch) g.gk[ch] = gC[ch] * w[j] * c[j][ch] * (1.0 - c[j][ch]);
        Sc += w[j] * c[j];
        St += w[j] * ts[j];
      }
      record_count[i] = n;
    }
  }

  LossResult res;
  double sum_rgb = 0.0, sum_depth = 0.0;
  for (std::size_t i = 0; i < rays; ++i) {
    sum_rgb += batch.weight[i] * traces[i].err_rgb;
    if (traces[i].has_depth) sum_depth += traces[i].err_depth;
  }
  res.l_rgb = sum_rgb * rgb_scale;
  res.l_depth = depth_rays > 0 ? sum_depth / static_cast<double>(depth_rays) : 0.0;
  res.total = res.l_rgb + cfg.lambda_d * res.l_depth;
  res.depth_rays = depth_rays;
  if (!want_gradients) return res;

  // Fixed-order scatter keeps the sums independent of the thread count.
  res.grad_density.assign(field.density.size(), 0.0);
  res.grad_color.assign(field.color.size(), 0.0);
  std::size_t idx[8];
  double wt[8];
  for (std::size_t i = 0; i < rays; ++i) {
    const GradRecord* rec = &records[i * static_cast<std::size_t>(n)];
    for (int j = 0; j < record_count[i]; ++j) {
      const GradRecord& g = rec[j];
      lat.corners(g.base, g.fr, idx, wt);
      for (int k = 0; k < 8; ++k) {
        res.grad_density[idx[k]] += wt[k] * g.gs;
        double* gc = &res.grad_color[3 * idx[k]];
        gc[0] += wt[k] * g.gk[0];
        gc[1] += wt[k] * g.gk[1];
        gc[2] += wt[k] * g.gk[2];
      }
    }
  }
  return res;
}

BatchSampler::BatchSampler(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
                           const SparseCloud& object_cloud, const Aabb& box,
                           const TrainConfig& cfg)
    : cfg_(cfg), rng_(cfg.seed) {
  cfg.validate();
  box.validate();
  std::vector<const ViewImage*> used;
  for (const auto& v : views) {
    const auto it = masks.find(v.view_id);
    if (it == masks.end() || it->second.status != MaskStatus::accepted) continue;
    if (!it->second.bits.same_shape(v.intrinsics.width, v.intrinsics.height) ||
        !v.rgb.same_shape(v.intrinsics.width, v.intrinsics.height)) {
      throw Error(Errc::dimension_mismatch,
                  "mask or image of view " + std::to_string(v.view_id) + " has the wrong size");
    }
    used.push_back(&v);
    view_ids_.push_back(v.view_id);
  }
  if (used.empty()) throw Error(Errc::no_accepted_views, "no view has an accepted mask");

  const bool all_dense = std::all_of(used.begin(), used.end(),
                                     [](const ViewImage* v) { return v->depth.has_value(); });
  switch (cfg.depth_source) {
    case DepthSource::automatic:
      mode_ = all_dense ? DepthSource::dense
              : !object_cloud.points.empty() ? DepthSource::sparse
                                            : DepthSource::none;
      break;
    case DepthSource::dense:
      if (!all_dense) throw Error(Errc::invalid_argument, "dense depth requested but missing");
      mode_ = DepthSource::dense;
      break;
    default:
      mode_ = cfg.depth_source;
  }

  const double near = cfg.near_or_default();
  const double far = cfg.far_or_default();
  for (const ViewImage* v : used) {
    const BitMask& bits = masks.at(v->view_id).bits;
    const auto& k = v->intrinsics;
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        Ray ray = ray_for_pixel(x, y, *v, near, far);
        const auto hit = intersect(box, ray);
        if (!hit) continue;
        ray.near = hit->first;
        ray.far = hit->second;
        PooledRay pr{ray, Vec3::Zero(), std::nullopt, v->view_id, x, y};
        if (bits(x, y)) {
          pr.color = v->rgb(x, y).cast<double>();
          if (mode_ == DepthSource::dense) {
            const double z = (*v->depth)(x, y);
            if (z > 0.0) pr.depth = z / axis_cosine(x, y, k);
          }
          inside_.push_back(pr);
        } else {
          outside_.push_back(pr);
        }
      }
    }
    if (mode_ != DepthSource::sparse) continue;
    for (const auto& f : object_cloud.view_features(v->view_id)) {
      if (!f.point_id) continue;
      const auto pt = object_cloud.points.find(*f.point_id);
      if (pt == object_cloud.points.end()) continue;
      const int x = pixel_index(f.uv.x()), y = pixel_index(f.uv.y());
      if (!bits.contains(x, y) || !bits(x, y)) continue;
      const double z = v->pose.to_camera(pt->second.xyz).z();
      if (!(z > 0.0)) continue;
      Ray ray = ray_for_pixel(x, y, *v, near, far);
      const auto hit = intersect(box, ray);
      if (!hit) continue;
      ray.near = hit->first;
      ray.far = hit->second;
      depth_.push_back({ray, v->rgb(x, y).cast<double>(), z / axis_cosine(x, y, k), v->view_id,
                        x, y});
    }
  }
  if (inside_.empty() && depth_.empty()) {
    throw Error(Errc::empty_mask, "no in-mask pixel of an accepted view meets the object box");
  }
}

RayBatch BatchSampler::next() {
  const int total = cfg_.batch_rays;
  const int n_out =
      outside_.empty() ? 0 : static_cast<int>(std::lround(cfg_.out_of_mask_fraction * total));
  int n_depth = depth_.empty()
                    ? 0
                    : static_cast<int>(std::lround(cfg_.sparse_depth_fraction * total));
  if (inside_.empty()) n_depth = total - n_out;
  const int n_in = total - n_out - n_depth;
  RayBatch batch;
  batch.rays.reserve(total);
  offsets_.clear();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&](const std::vector<PooledRay>& pool, int count, bool empty_target) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int i = 0; i < count; ++i) {
      const PooledRay& p = pool[pick(rng_)];
      offsets_.push_back(unit(rng_));
      if (!cfg_.random_background) {
        batch.push(p.ray, p.color, p.depth);
        continue;
      }
      const Vec3 bg(unit(rng_), unit(rng_), unit(rng_));
      batch.push(p.ray, empty_target ? bg : p.color, p.depth);
      batch.background.push_back(bg);
    }
  };
  draw(inside_, n_in, false);
  draw(depth_, n_depth, false);
  draw(outside_, n_out, true);
  return batch;
}

void write_log_line(std::ostream& out, const TrainLogEntry& entry) {
  nlohmann::json j{{"iter", entry.iter}, {"l_rgb", entry.l_rgb}, {"l_depth", entry.l_depth}};
  if (entry.psnr) j["psnr"] = *entry.psnr;
  out << j.dump() << '\n';
}

namespace {

class Adam {
 public:
  Adam(std::size_t n, double lr, double b1, double b2) : lr_(lr), b1_(b1), b2_(b2), m_(n), v_(n) {}

  // Writes the stepped parameters into `next`; returns false on a non-finite value.
  bool step(const std::vector<double>& param, const std::vector<double>& grad,
            std::vector<double>& next, int t) {
    const double bc1 = 1.0 - std::pow(b1_, t);
    const double bc2 = 1.0 - std::pow(b2_, t);
    const double step = lr_ * std::sqrt(bc2) / bc1;
    bool ok = true;
    next.resize(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i];
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
      next[i] = param[i] - step * m_[i] / (std::sqrt(v_[i]) + 1e-8);
      ok &= std::isfinite(next[i]);
    }
    return ok;
  }

 private:
  double lr_, b1_, b2_;
  std::vector<double> m_, v_;
};

double eval_psnr(const VoxelField& field, const EvalView& ev, int n_samples) {
  const auto img = render_view(field, ev.view.intrinsics, ev.view.pose, n_samples);
  return psnr(img.rgb, masked_image(ev.view.rgb, ev.mask));
}

}  // namespace

TrainResult train_in_box(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
                         const SparseCloud& object_cloud, const Aabb& box,
                         const TrainConfig& cfg, const EvalView* held_out, std::ostream* jsonl) {
  cfg.validate();
  std::size_t accepted = 0;
  for (const auto& v : views) {
    const auto it = masks.find(v.view_id);
    if (it != masks.end() && it->second.status == MaskStatus::accepted) ++accepted;
  }
  if (accepted < 2) {
    throw Error(Errc::no_accepted_views,
                "training needs at least 2 accepted views, got " + std::to_string(accepted));
  }
  BatchSampler sampler(views, masks, object_cloud, box, cfg);
  const int r = cfg.grid_resolution;
  TrainResult res;
  res.field = VoxelField::uniform(box, {r, r, r}, cfg.density_init, Vec3::Zero());
  VoxelField& field = res.field;

  const auto record = [&](TrainLogEntry e) {
    if (jsonl) write_log_line(*jsonl, e);
    res.log.push_back(std::move(e));
  };
  const int eval_every = std::max(1, cfg.iters / 10);
  if (cfg.iters == 0) {
    TrainLogEntry e;
    if (held_out) e.psnr = eval_psnr(field, *held_out, cfg.samples_per_ray);
    record(e);
    return res;
  }

  Adam adam_d(field.density.size(), cfg.lr_density, cfg.adam_beta1, cfg.adam_beta2);
  Adam adam_c(field.color.size(), cfg.lr_color, cfg.adam_beta1, cfg.adam_beta2);
  std::vector<double> next_d, next_c;
  for (int it = 1; it <= cfg.iters; ++it) {
    const RayBatch batch = sampler.next();
    const LossResult l = loss(field, batch, cfg, true, sampler.offsets());
    if (!std::isfinite(l.total)) throw TrainingDiverged(it, field);
    const bool ok_d = adam_d.step(field.density, l.grad_density, next_d, it);
    const bool ok_c = adam_c.step(field.color, l.grad_color, next_c, it);
    if (!ok_d || !ok_c) throw TrainingDiverged(it, field);
    field.density.swap(next_d);
    field.color.swap(next_c);
    TrainLogEntry e{it, l.l_rgb, l.l_depth, std::nullopt};
    if (held_out && (it % eval_every == 0 || it == cfg.iters)) {
      e.psnr = eval_psnr(field, *held_out, cfg.samples_per_ray);
    }
    record(e);
  }
  return res;
}

TrainResult train(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
                  const SparseCloud& object_cloud, const TrainConfig& cfg,
                  const EvalView* held_out, std::ostream* jsonl) {
  return train_in_box(views, masks, object_cloud, object_aabb(object_cloud, cfg), cfg, held_out,
                      jsonl);
}

namespace {

constexpr char kMagic[4] = {'S', 'G', 'V', 'F'};
constexpr std::uint32_t kFieldVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw Error(Errc::parse, "field checkpoint truncated while reading " + what);
  }
  return v;
}

}  // namespace

void save_field(const std::filesystem::path& path, const VoxelField& field) {
  field.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out.write(kMagic, 4);
  put(out, kFieldVersion);
  for (int r : field.resolution) put(out, static_cast<std::int32_t>(r));
  for (int a = 0; a < 3; ++a) put(out, static_cast<float>(field.aabb.min[a]));
  for (int a = 0; a < 3; ++a) put(out, static_cast<float>(field.aabb.max[a]));
  for (double v : field.density) put(out, static_cast<float>(v));
  for (double v : field.color) put(out, static_cast<float>(v));
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

VoxelField load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(Errc::parse, path.string() + " is not a field checkpoint");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kFieldVersion) {
    throw Error(Errc::parse, "unsupported checkpoint version " + std::to_string(version));
  }
  VoxelField f;
  for (int& r : f.resolution) {
    r = get<std::int32_t>(in, "resolution");
    if (r < 2 || r > 4096) throw Error(Errc::parse, "implausible grid resolution in checkpoint");
  }
  for (int a = 0; a < 3; ++a) f.aabb.min[a] = get<float>(in, "aabb");
  for (int a = 0; a < 3; ++a) f.aabb.max[a] = get<float>(in, "aabb");
  f.density.resize(f.vertex_count());
  f.color.resize(3 * f.vertex_count());
  for (double& v : f.density) v = get<float>(in, "density grid");
  for (double& v : f.color) v = get<float>(in, "color grid");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::parse, "trailing bytes after the grids in " + path.string());
  }
  f.validate();
  return f;
}

}  // namespace segfield
