#include "segfield/propagation.hpp"

#include <algorithm>
#include <iostream>

#include <nlohmann/json.hpp>

#include "segfield/image_io.hpp"
#include "segfield/json_util.hpp"
#include "segfield/kmeans.hpp"
#include "segfield/mask_ops.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace segfield {

std::size_t ObjectPointList::add(std::span<const PointId> ids, int view_id) {
  std::size_t added = 0;
  for (const auto id : ids) {
    if (point_ids.insert(id).second) {
      provenance.emplace(id, view_id);
      ++added;
    }
  }
  return added;
}

void PropagationConfig::validate() const {
  if (prompts_per_view < 1) throw Error(Errc::invalid_argument, "prompts_per_view must be >= 1");
  if (erosion_px < 0) throw Error(Errc::invalid_argument, "erosion_px must be >= 0");
  if (min_track_hits < 0) throw Error(Errc::invalid_argument, "min_track_hits must be >= 0");
}

const ObjectPointList& PropagationResult::object(int object_id) const {
  for (const auto& o : objects) {
    if (o.object_id == object_id) return o;
  }
  throw Error(Errc::invalid_argument, "no object " + std::to_string(object_id));
}

std::vector<PointId> points_in_mask(const SparseCloud& cloud, int view_id, const BitMask& bits,
                                    int erosion_px) {
  const BitMask core = erode(bits, erosion_px);
  std::vector<PointId> ids;
  for (const auto& f : cloud.view_features(view_id)) {
    if (!f.point_id) continue;
    const int x = pixel_index(f.uv.x());
    const int y = pixel_index(f.uv.y());
    if (core.contains(x, y) && core(x, y)) ids.push_back(*f.point_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

InitResult init_object(const SparseCloud& cloud, const ViewImage& view0, const PromptSet& prompts0,
                       Segmenter& segmenter, const PropagationConfig& cfg, int object_id) {
  cfg.validate();
  InitResult r;
  try {
    r.mask = segmenter.segment(view0, prompts0);
  } catch (const Error& e) {
    if (e.code() != Errc::empty_mask) throw;
    throw Error(Errc::uninitializable_object,
                "object " + std::to_string(object_id) + " cannot be initialized: view " +
                    std::to_string(view0.view_id) + " prompts select nothing (" + e.what() + ")");
  }
  r.mask.view_id = view0.view_id;
  r.mask.status = MaskStatus::accepted;
  const auto ids = points_in_mask(cloud, view0.view_id, r.mask.bits, cfg.erosion_px);
  if (ids.empty()) {
    const auto& features = cloud.view_features(view0.view_id);
    const auto linked = std::count_if(features.begin(), features.end(),
                                      [](const Feature& f) { return f.point_id.has_value(); });
    throw Error(Errc::uninitializable_object,
                "object " + std::to_string(object_id) + " cannot be initialized: view " +
                    std::to_string(view0.view_id) + " has " + std::to_string(linked) +
                    " linked features, 0 inside the mask (" +
                    std::to_string(count_set(r.mask.bits)) + " px, erosion " +
                    std::to_string(cfg.erosion_px) + " px)");
  }
  r.list.object_id = object_id;
  r.list.add(ids, view0.view_id);
  return r;
}

PromptSet select_prompts(const SparseCloud& cloud, const ObjectPointList& list, int view_id,
                         const PropagationConfig& cfg) {
  std::vector<Vec2> candidates;
  for (const auto& f : cloud.view_features(view_id)) {
    if (f.point_id && list.contains(*f.point_id)) candidates.push_back(f.uv);
  }
  // Identical coordinates would make medoids coincide.
  std::sort(candidates.begin(), candidates.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  PromptSet prompts;
  if (candidates.empty()) return prompts;
  const auto km = kmeans(candidates, cfg.prompts_per_view, cfg.kmeans_iters,
                         cfg.seed + static_cast<std::uint64_t>(view_id));
  for (const auto m : km.medoids) {
    prompts.points.push_back({candidates[m].x(), candidates[m].y(), Polarity::positive});
  }
  return prompts;
}

namespace {

Mask unprocessed_mask(const ViewImage& view) {
  Mask m;
  m.view_id = view.view_id;
  m.bits = BitMask(view.intrinsics.width, view.intrinsics.height, 0);
  m.score = 0.0;
  m.status = MaskStatus::unprocessed;
  return m;
}

std::size_t shared_tracks(const SparseCloud& cloud, int view_id,
                          const std::vector<ObjectPointList>& lists) {
  std::size_t n = 0;
  for (const auto& f : cloud.view_features(view_id)) {
    if (!f.point_id) continue;
    for (const auto& l : lists) n += l.contains(*f.point_id);
  }
  return n;
}

void prune(ObjectPointList& list, const SparseCloud& cloud, const std::map<int, Mask>& masks,
           const PropagationConfig& cfg) {
  if (cfg.min_track_hits <= 1) return;
  std::map<PointId, int> hits;
  for (const auto& [view_id, mask] : masks) {
    if (mask.status != MaskStatus::accepted) continue;
    for (const auto id : points_in_mask(cloud, view_id, mask.bits, cfg.erosion_px)) ++hits[id];
  }
  for (auto it = list.point_ids.begin(); it != list.point_ids.end();) {
    if (hits[*it] < cfg.min_track_hits) {
      list.provenance.erase(*it);
      it = list.point_ids.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace

PropagationResult propagate(const SparseCloud& cloud, std::span<const ViewImage> views,
                            std::span<const ObjectSeed> objects, Segmenter& segmenter,
                            const PropagationConfig& cfg) {
  cfg.validate();
  if (objects.empty()) throw Error(Errc::invalid_argument, "propagate needs at least one object");
  auto find_view = [&](int view_id) -> const ViewImage& {
    for (const auto& v : views) {
      if (v.view_id == view_id) return v;
    }
    throw Error(Errc::integrity, "seed view " + std::to_string(view_id) + " not in the dataset");
  };

  PropagationResult result;
  std::map<int, int> seed_view;  // object id -> seed view id
  for (const auto& seed : objects) {
    if (seed_view.count(seed.object_id)) {
      throw Error(Errc::invalid_argument,
                  "duplicate object id " + std::to_string(seed.object_id));
    }
    auto init = init_object(cloud, find_view(seed.view_id), seed.prompts, segmenter, cfg,
                            seed.object_id);
    seed_view[seed.object_id] = seed.view_id;
    result.masks[seed.object_id][seed.view_id] = std::move(init.mask);
    result.objects.push_back(std::move(init.list));
  }

  std::vector<const ViewImage*> pending;
  for (const auto& v : views) {
    const bool seeded_for_all = std::all_of(objects.begin(), objects.end(), [&](const auto& s) {
      return s.view_id == v.view_id;
    });
    if (!seeded_for_all) pending.push_back(&v);
  }

  while (!pending.empty()) {
    std::size_t pick = 0;
    if (cfg.visit_order == VisitOrder::covisibility) {
      std::size_t best = 0;
      for (std::size_t i = 0; i < pending.size(); ++i) {
        const std::size_t score = shared_tracks(cloud, pending[i]->view_id, result.objects);
        const bool better =
            i == 0 || score > best ||
            (score == best && pending[i]->view_id < pending[pick]->view_id);
        if (better) {
          best = score;
          pick = i;
        }
      }
    }
    const ViewImage& view = *pending[pick];
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(pick));
    result.visit_order.push_back(view.view_id);

    // Masks for all objects use the point lists as they were before this view.
    std::vector<std::pair<std::size_t, Mask>> updates;
    for (std::size_t k = 0; k < result.objects.size(); ++k) {
      const auto& list = result.objects[k];
      if (seed_view[list.object_id] == view.view_id) continue;
      const PromptSet prompts = select_prompts(cloud, list, view.view_id, cfg);
      if (prompts.empty()) {
        updates.emplace_back(k, unprocessed_mask(view));
        continue;
      }
      try {
        Mask mask = segmenter.segment(view, prompts);
        mask.view_id = view.view_id;
        mask.status = MaskStatus::accepted;
        updates.emplace_back(k, std::move(mask));
      } catch (const Error& e) {
        if (classify(e.code()) == ErrorClass::segmenter_transport) {
          throw PropagationAborted(e, std::move(result));
        }
        result.warnings.push_back("object " + std::to_string(list.object_id) + ", view " +
                                  std::to_string(view.view_id) + ": " + e.what());
        updates.emplace_back(k, unprocessed_mask(view));
      }
    }
    for (auto& [k, mask] : updates) {
      auto& list = result.objects[k];
      if (mask.status == MaskStatus::accepted) {
        const auto ids = points_in_mask(cloud, view.view_id, mask.bits, cfg.erosion_px);
        list.add(ids, view.view_id);
      }
      result.masks[list.object_id][view.view_id] = std::move(mask);
    }
  }

  for (auto& list : result.objects) prune(list, cloud, result.masks[list.object_id], cfg);
  return result;
}

ObjectPointList collect_object_points(const SparseCloud& cloud, const std::map<int, Mask>& masks,
                                      const PropagationConfig& cfg, int object_id) {
  ObjectPointList list;
  list.object_id = object_id;
  for (const auto& [view_id, mask] : masks) {
    if (mask.status != MaskStatus::accepted) continue;
    list.add(points_in_mask(cloud, view_id, mask.bits, cfg.erosion_px), view_id);
  }
  prune(list, cloud, masks, cfg);
  return list;
}

SparseCloud export_object_cloud(const SparseCloud& cloud, const ObjectPointList& list) {
  if (list.point_ids.empty()) throw Error(Errc::empty_object, "object point list is empty");
  SparseCloud out;
  for (const auto id : list.point_ids) {
    const auto it = cloud.points.find(id);
    if (it == cloud.points.end()) {
      throw Error(Errc::integrity, "point " + std::to_string(id) + " not in the cloud");
    }
    out.points.emplace(id, it->second);
  }
  out.features = cloud.features;
  for (auto& [view_id, features] : out.features) {
    for (auto& f : features) {
      if (f.point_id && !list.contains(*f.point_id)) f.point_id.reset();
    }
  }
  return out;
}

void write_masks(const fs::path& dir, const std::map<int, std::map<int, Mask>>& masks) {
  fs::create_directories(dir);
  json index = json::array();
  for (const auto& [object_id, per_view] : masks) {
    for (const auto& [view_id, mask] : per_view) {
      const std::string file =
          "obj" + std::to_string(object_id) + "_view" + std::to_string(view_id) + ".png";
      write_mask_png(dir / file, mask.bits);
      index.push_back({{"view_id", view_id},
                       {"object_id", object_id},
                       {"score", mask.score},
                       {"status", to_string(mask.status)},
                       {"file", file}});
    }
  }
  json_util::write_file(dir / "index.json", index);
}

std::map<int, std::map<int, Mask>> read_masks(const fs::path& dir) {
  const json index = json_util::read_file(dir / "index.json");
  std::map<int, std::map<int, Mask>> masks;
  try {
    for (const auto& entry : index) {
      json_util::check_keys(entry, {"view_id", "object_id", "score", "status", "file"},
                            "mask index entry");
      Mask m;
      m.view_id = entry.at("view_id").get<int>();
      m.score = entry.at("score").get<double>();
      m.status = mask_status_from_string(entry.at("status").get<std::string>());
      m.bits = read_mask_png(dir / entry.at("file").get<std::string>());
      masks[entry.at("object_id").get<int>()][m.view_id] = std::move(m);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::parse, (dir / "index.json").string() + ": " + e.what());
  }
  return masks;
}

}  // namespace segfield
