#include "segfield/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "segfield/camera_path.hpp"
#include "segfield/error.hpp"

namespace segfield {

void SceneSpec::validate() const {
  intrinsics.validate();
  std::set<int> ids;
  for (const auto& obj : objects) {
    if (obj.instance_id <= 0) {
      throw Error(Errc::invalid_argument, "instance ids must be positive (0 is background)");
    }
    if (!ids.insert(obj.instance_id).second) {
      throw Error(Errc::invalid_argument,
                  "duplicate instance id " + std::to_string(obj.instance_id));
    }
    if ((obj.size.array() <= 0.0).any()) {
      throw Error(Errc::invalid_argument, "object sizes must be positive");
    }
  }
  if (std::abs(light.norm() - 1.0) > 1e-9) {
    throw Error(Errc::invalid_argument, "light direction must be a unit vector");
  }
  for (const auto& pose : cameras) {
    pose.validate();
    const Vec3 c = pose.center();
    for (const auto& obj : objects) {
      const bool inside =
          obj.shape == ShapeKind::sphere
              ? (c - obj.center).norm() <= obj.size.x()
              : ((c - obj.center).cwiseAbs().array() <= 0.5 * obj.size.array()).all();
      if (inside) throw Error(Errc::invalid_argument, "camera placed inside an object");
    }
    if (room && !((c.array() > room->min.array()).all() && (c.array() < room->max.array()).all())) {
      throw Error(Errc::invalid_argument, "camera placed outside the room");
    }
  }
}

SceneSpec SceneSpec::without_instance(int instance_id) const {
  SceneSpec copy = *this;
  std::erase_if(copy.objects,
                [instance_id](const SceneObject& o) { return o.instance_id == instance_id; });
  return copy;
}

namespace {

constexpr double kEps = 1e-9;

std::optional<SurfaceHit> hit_sphere(const SceneObject& obj, const Vec3& o, const Vec3& d) {
  const double r = obj.size.x();
  const Vec3 oc = o - obj.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - r * r;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= kEps) t = -b + s;
  if (t <= kEps) return std::nullopt;
  SurfaceHit hit;
  hit.t = t;
  hit.normal = (o + t * d - obj.center) / r;
  hit.albedo = obj.albedo;
  hit.instance_id = obj.instance_id;
  return hit;
}

// Slab test against [lo, hi]; returns entry/exit parameters and the axis of each.
bool slab(const Vec3& lo, const Vec3& hi, const Vec3& o, const Vec3& d, double& t0, double& t1,
          int& axis0, int& axis1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  axis0 = axis1 = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-300) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    if (tb < t1) {
      t1 = tb;
      axis1 = a;
    }
  }
  return t0 <= t1;
}

std::optional<SurfaceHit> hit_box(const SceneObject& obj, const Vec3& o, const Vec3& d) {
  const Vec3 lo = obj.center - 0.5 * obj.size;
  const Vec3 hi = obj.center + 0.5 * obj.size;
  double t0, t1;
  int a0, a1;
  if (!slab(lo, hi, o, d, t0, t1, a0, a1)) return std::nullopt;
  double t = t0;
  int axis = a0;
  if (t <= kEps) {
    t = t1;
    axis = a1;
  }
  if (t <= kEps) return std::nullopt;
  SurfaceHit hit;
  hit.t = t;
  hit.normal = Vec3::Zero();
  const Vec3 p = o + t * d;
  hit.normal[axis] = p[axis] > obj.center[axis] ? 1.0 : -1.0;
  hit.albedo = obj.albedo;
  hit.instance_id = obj.instance_id;
  return hit;
}

std::optional<SurfaceHit> hit_room(const RoomBox& room, const Vec3& o, const Vec3& d) {
  double t0, t1;
  int a0, a1;
  if (!slab(room.min, room.max, o, d, t0, t1, a0, a1) || t1 <= kEps) return std::nullopt;
  SurfaceHit hit;
  hit.t = t1;
  hit.normal = Vec3::Zero();
  hit.normal[a1] = d[a1] > 0.0 ? -1.0 : 1.0;  // walls face inward
  hit.albedo = room.albedo;
  hit.instance_id = 0;
  return hit;
}

Vec3 shade(const SceneSpec& spec, const SurfaceHit& hit) {
  const double lambert = std::max(0.0, hit.normal.dot(spec.light));
  return hit.albedo * (spec.ambient + (1.0 - spec.ambient) * lambert);
}

struct SurfaceSample {
  Vec3 position;
  int instance_id;
  Vec3 albedo;
};

// Uniform point on the surface of an axis-aligned box of the given extents.
Vec3 sample_box_surface(const Vec3& lo, const Vec3& hi, std::mt19937_64& rng) {
  const Vec3 e = hi - lo;
  const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double pick = uni(rng) * (areas[0] + areas[1] + areas[2]);
  const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
  Vec3 p;
  for (int a = 0; a < 3; ++a) p[a] = lo[a] + uni(rng) * e[a];
  p[axis] = uni(rng) < 0.5 ? lo[axis] : hi[axis];
  return p;
}

double box_area(const Vec3& e) { return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z()); }

}  // namespace

std::optional<SurfaceHit> trace_ray(const SceneSpec& spec, const Vec3& origin,
                                    const Vec3& direction) {
  std::optional<SurfaceHit> best;
  for (const auto& obj : spec.objects) {
    auto hit = obj.shape == ShapeKind::sphere ? hit_sphere(obj, origin, direction)
                                              : hit_box(obj, origin, direction);
    if (hit && (!best || hit->t < best->t)) best = hit;
  }
  if (spec.room) {
    auto hit = hit_room(*spec.room, origin, direction);
    if (hit && (!best || hit->t < best->t)) best = hit;
  }
  return best;
}

std::vector<RenderedView> render_scene(const SceneSpec& spec, int first_view_id) {
  spec.validate();
  const auto& k = spec.intrinsics;
  std::vector<RenderedView> out(spec.cameras.size());
  // Views are independent; render them in parallel.
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(spec.cameras.size()); ++i) {
    RenderedView rv;
    rv.view.view_id = first_view_id + i;
    rv.view.name = "view_" + std::to_string(first_view_id + i);
    rv.view.intrinsics = k;
    rv.view.pose = spec.cameras[i];
    rv.view.rgb = RgbImage(k.width, k.height, Eigen::Vector3f::Zero());
    rv.view.depth = DepthMap(k.width, k.height, 0.0f);
    rv.instances = InstanceMap(k.width, k.height, 0);
    const Vec3 origin = rv.view.pose.center();
    const Mat3 cam_to_world = rv.view.pose.rotation.transpose();
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
        const Vec3 dir = (cam_to_world * dir_cam).normalized();
        const auto hit = trace_ray(spec, origin, dir);
        if (!hit) continue;
        rv.view.rgb(x, y) = shade(spec, *hit).cast<float>();
        (*rv.view.depth)(x, y) = static_cast<float>(hit->t / dir_cam.norm());
        rv.instances(x, y) = hit->instance_id;
      }
    }
    out[i] = std::move(rv);
  }
  return out;
}

FabricatedCloud fabricate_sparse_cloud(const SceneSpec& spec,
                                       const std::vector<RenderedView>& views, int n_points,
                                       double noise_px, std::uint64_t seed) {
  if (n_points <= 0) throw Error(Errc::invalid_argument, "n_points must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Surface areas for area-proportional sampling; the room is the last entry.
  std::vector<double> areas;
  for (const auto& obj : spec.objects) {
    areas.push_back(obj.shape == ShapeKind::sphere
                        ? 4.0 * std::numbers::pi * obj.size.x() * obj.size.x()
                        : box_area(obj.size));
  }
  if (spec.room) areas.push_back(box_area(spec.room->max - spec.room->min));
  FabricatedCloud out;
  for (const auto& v : views) out.cloud.features[v.view.view_id];
  if (areas.empty()) {
    std::erase_if(out.cloud.features, [](const auto& kv) { return kv.second.empty(); });
    return out;
  }
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());

  PointId next_id = 1;
  for (int n = 0; n < n_points; ++n) {
    const std::size_t which = pick(rng);
    SurfaceSample s;
    if (which < spec.objects.size()) {
      const auto& obj = spec.objects[which];
      if (obj.shape == ShapeKind::sphere) {
        Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
        while (dir.norm() < 1e-12) dir = Vec3(gauss(rng), gauss(rng), gauss(rng));
        s.position = obj.center + obj.size.x() * dir.normalized();
      } else {
        s.position = sample_box_surface(obj.center - 0.5 * obj.size,
                                        obj.center + 0.5 * obj.size, rng);
      }
      s.instance_id = obj.instance_id;
      s.albedo = obj.albedo;
    } else {
      s.position = sample_box_surface(spec.room->min, spec.room->max, rng);
      s.instance_id = 0;
      s.albedo = spec.room->albedo;
    }

    struct Observation {
      int view_id;
      Vec2 uv;
    };
    std::vector<Observation> seen;
    for (const auto& rv : views) {
      const auto& view = rv.view;
      const auto proj = project_point(s.position, view.intrinsics, view.pose);
      if (!proj) continue;
      const Vec3 origin = view.pose.center();
      const double dist = (s.position - origin).norm();
      const auto hit = trace_ray(spec, origin, (s.position - origin) / dist);
      if (!hit || std::abs(hit->t - dist) > 1e-3 || hit->instance_id != s.instance_id) continue;
      const int px = pixel_index(proj->u);
      const int py = pixel_index(proj->v);
      if (!rv.instances.contains(px, py) || rv.instances(px, py) != s.instance_id) continue;
      Vec2 uv(proj->u, proj->v);
      if (noise_px > 0.0) {
        uv += noise_px * Vec2(gauss(rng), gauss(rng));
        if (!view.intrinsics.contains(uv.x(), uv.y())) continue;
      }
      seen.push_back({view.view_id, uv});
    }
    if (seen.size() < 2) continue;

    const PointId id = next_id++;
    Point3D point;
    point.xyz = s.position;
    for (int c = 0; c < 3; ++c) {
      point.rgb[c] = static_cast<std::uint8_t>(std::lround(std::clamp(s.albedo[c], 0.0, 1.0) * 255));
    }
    for (const auto& obs : seen) {
      auto& list = out.cloud.features[obs.view_id];
      point.track.push_back({obs.view_id, static_cast<int>(list.size())});
      list.push_back(Feature{obs.uv, id});
    }
    out.cloud.points.emplace(id, std::move(point));
    out.point_instance.emplace(id, s.instance_id);
  }
  std::erase_if(out.cloud.features, [](const auto& kv) { return kv.second.empty(); });
  return out;
}

Raster<std::int32_t> label_regions(const InstanceMap& instances, int* region_count) {
  Raster<std::int32_t> labels(instances.width(), instances.height(), 0);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < instances.height(); ++y) {
    for (int x = 0; x < instances.width(); ++x) {
      const int id = instances(x, y);
      if (id == 0 || labels(x, y) != 0) continue;
      ++next;
      labels(x, y) = next;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + dx[k];
          const int ny = cy + dy[k];
          if (instances.contains(nx, ny) && labels(nx, ny) == 0 && instances(nx, ny) == id) {
            labels(nx, ny) = next;
            stack.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  if (region_count) *region_count = next;
  return labels;
}

BitMask instance_mask(const InstanceMap& instances, int instance_id) {
  BitMask mask(instances.width(), instances.height(), 0);
  for (std::size_t i = 0; i < instances.size(); ++i) mask[i] = instances[i] == instance_id;
  return mask;
}

namespace {

BitMask morph_square(const BitMask& in, int radius, bool dilate) {
  BitMask out(in.width(), in.height(), 0);
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      bool any = false;
      bool all = true;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const bool v = in.contains(x + dx, y + dy) && in(x + dx, y + dy);
          any = any || v;
          all = all && v;
        }
      }
      out(x, y) = dilate ? any : all;
    }
  }
  return out;
}

}  // namespace

Mask oracle_segment(const InstanceMap& instances, const PromptSet& prompts, int view_id,
                    int boundary_px) {
  prompts.validate(instances.width(), instances.height());
  if (std::none_of(prompts.points.begin(), prompts.points.end(),
                   [](const PointPrompt& p) { return p.polarity == Polarity::positive; }) &&
      !prompts.box) {
    throw Error(Errc::invalid_argument, "segmentation needs a positive prompt or a box");
  }
  const auto labels = label_regions(instances);
  std::set<int> selected;
  std::set<int> vetoed;
  for (const auto& p : prompts.points) {
    const int x = pixel_index(p.u);
    const int y = pixel_index(p.v);
    if (p.polarity == Polarity::positive) {
      if (labels(x, y) != 0) selected.insert(labels(x, y));
    } else if (instances(x, y) != 0) {
      vetoed.insert(instances(x, y));
    }
  }
  if (prompts.box) {
    const int x0 = pixel_index(prompts.box->u_min), x1 = pixel_index(prompts.box->u_max);
    const int y0 = pixel_index(prompts.box->v_min), y1 = pixel_index(prompts.box->v_max);
    std::map<int, long> votes;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (instances(x, y) != 0) ++votes[instances(x, y)];
      }
    }
    if (!votes.empty()) {
      const int majority =
          std::max_element(votes.begin(), votes.end(),
                           [](const auto& a, const auto& b) { return a.second < b.second; })
              ->first;
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (instances(x, y) == majority) selected.insert(labels(x, y));
        }
      }
    }
  }

  Mask mask;
  mask.view_id = view_id;
  mask.bits = BitMask(instances.width(), instances.height(), 0);
  mask.score = 1.0;
  mask.status = MaskStatus::accepted;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    mask.bits[i] = selected.count(labels[i]) && !vetoed.count(instances[i]);
  }
  if (count_set(mask.bits) == 0) {
    throw Error(Errc::empty_mask, "prompts select no object (background or vetoed)");
  }
  if (boundary_px != 0) {
    mask.bits = morph_square(mask.bits, std::abs(boundary_px), boundary_px > 0);
    if (count_set(mask.bits) == 0) throw Error(Errc::empty_mask, "mask eroded away");
  }
  return mask;
}

std::vector<ScoredBox> oracle_boxes(const InstanceMap& instances, int instance_id) {
  InstanceMap only(instances.width(), instances.height(), 0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    only[i] = instances[i] == instance_id ? 1 : 0;
  }
  int regions = 0;
  const auto labels = label_regions(only, &regions);
  if (regions == 0) return {};
  struct Extent {
    int x0 = std::numeric_limits<int>::max(), y0 = std::numeric_limits<int>::max();
    int x1 = -1, y1 = -1;
    long area = 0;
  };
  std::vector<Extent> ext(regions);
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      const int l = labels(x, y);
      if (l == 0) continue;
      auto& e = ext[l - 1];
      e.x0 = std::min(e.x0, x);
      e.y0 = std::min(e.y0, y);
      e.x1 = std::max(e.x1, x);
      e.y1 = std::max(e.y1, y);
      ++e.area;
    }
  }
  long largest = 0;
  for (const auto& e : ext) largest = std::max(largest, e.area);
  std::vector<ScoredBox> boxes;
  for (const auto& e : ext) {
    boxes.push_back({Box{double(e.x0), double(e.y0), double(e.x1), double(e.y1)},
                     static_cast<double>(e.area) / static_cast<double>(largest)});
  }
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
  return boxes;
}

SceneSpec preset_scene(const std::string& name) {
  SceneSpec spec;
  spec.intrinsics = CameraIntrinsics{150.0, 150.0, 63.5, 63.5, 128, 128};
  const double deg = std::numbers::pi / 180.0;
  if (name == "sphere") {
    spec.objects.push_back({ShapeKind::sphere, Vec3::Zero(), Vec3::Constant(0.5),
                            Vec3(0.85, 0.35, 0.2), 1});
    spec.cameras = orbit_path({.radius = 3.0, .count = 20, .elevation = 20 * deg,
                               .elevation_swing = 15 * deg});
    return spec;
  }
  if (name == "two-spheres") {
    spec.objects.push_back({ShapeKind::sphere, Vec3(-0.6, 0.0, 0.0), Vec3::Constant(0.45),
                            Vec3(0.85, 0.25, 0.2), 1});
    spec.objects.push_back({ShapeKind::sphere, Vec3(0.6, 0.1, 0.2), Vec3::Constant(0.35),
                            Vec3(0.2, 0.35, 0.85), 2});
    spec.cameras = orbit_path({.radius = 3.5, .count = 30, .elevation = 20 * deg,
                               .elevation_swing = 10 * deg});
    return spec;
  }
  if (name == "occluded" || name == "occlusion-free") {
    spec.objects.push_back({ShapeKind::sphere, Vec3::Zero(), Vec3::Constant(0.5),
                            Vec3(0.85, 0.35, 0.2), 1});
    if (name == "occluded") {
      // Low wall between the object and the four cameras at azimuth -18..18 degrees.
      spec.objects.push_back({ShapeKind::box, Vec3(2.0, 0.0, 0.1), Vec3(0.1, 1.8, 1.2),
                              Vec3(0.3, 0.7, 0.3), 2});
    }
    spec.cameras = orbit_path({.radius = 4.0, .count = 30, .elevation = 17 * deg,
                               .start_azimuth = -18 * deg});
    return spec;
  }
  if (name == "floor-sphere") {
    spec.objects.push_back({ShapeKind::box, Vec3(0.0, 0.0, -0.6), Vec3(3.0, 3.0, 0.2),
                            Vec3(0.35, 0.6, 0.35), 2});
    spec.objects.push_back({ShapeKind::sphere, Vec3::Zero(), Vec3::Constant(0.5),
                            Vec3(0.85, 0.35, 0.2), 1});
    spec.cameras = orbit_path({.radius = 3.5, .count = 24, .elevation = 30 * deg,
                               .elevation_swing = 8 * deg});
    return spec;
  }
  if (name == "small-object") {
    spec.room = RoomBox{Vec3(-4.0, -4.0, -1.0), Vec3(4.0, 4.0, 3.0), Vec3(0.6, 0.6, 0.55)};
    spec.objects.push_back({ShapeKind::box, Vec3(0.0, 0.0, -0.7), Vec3::Constant(0.6),
                            Vec3(0.8, 0.5, 0.2), 1});
    spec.cameras = orbit_path({.center = Vec3(0.0, 0.0, -0.7), .radius = 2.5, .count = 16,
                               .elevation = 25 * deg});
    return spec;
  }
  throw Error(Errc::invalid_argument, "unknown scene preset '" + name + "'");
}

}  // namespace segfield
