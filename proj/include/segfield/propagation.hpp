#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "segfield/colmap_io.hpp"
#include "segfield/error.hpp"
#include "segfield/prompts.hpp"
#include "segfield/segmenter.hpp"

namespace segfield {

/// Growing set of cloud points that belong to one object, with the view that
/// first contributed each point.
struct ObjectPointList {
  int object_id = 1;
  std::set<PointId> point_ids;
  std::map<PointId, int> provenance;

  bool contains(PointId id) const { return point_ids.count(id) != 0; }
  std::size_t size() const { return point_ids.size(); }
  /// Returns the number of points that were new.
  std::size_t add(std::span<const PointId> ids, int view_id);
};

enum class VisitOrder { input, covisibility };

struct PropagationConfig {
  int prompts_per_view = 5;
  int min_track_hits = 2;
  VisitOrder visit_order = VisitOrder::covisibility;
  int erosion_px = 2;
  int kmeans_iters = 25;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Initial prompts for one object on one view.
struct ObjectSeed {
  int object_id = 1;
  int view_id = 0;
  PromptSet prompts;
};

/// Ids of cloud points whose features in `view_id` fall inside `bits` after
/// eroding it by `erosion_px`.
std::vector<PointId> points_in_mask(const SparseCloud& cloud, int view_id, const BitMask& bits,
                                    int erosion_px);

struct InitResult {
  Mask mask;
  ObjectPointList list;
};

/// Segments the seed view and initializes the object's point list from the
/// features inside the (eroded) mask.
InitResult init_object(const SparseCloud& cloud, const ViewImage& view0, const PromptSet& prompts0,
                       Segmenter& segmenter, const PropagationConfig& cfg, int object_id = 1);

/// Positive prompts for `view_id`: the features tracking points of `list`,
/// reduced to cfg.prompts_per_view k-means medoids. Empty means skip the view.
PromptSet select_prompts(const SparseCloud& cloud, const ObjectPointList& list, int view_id,
                         const PropagationConfig& cfg);

struct PropagationResult {
  std::map<int, std::map<int, Mask>> masks;  // object id -> view id -> mask
  std::vector<ObjectPointList> objects;
  std::vector<int> visit_order;
  std::vector<std::string> warnings;

  const ObjectPointList& object(int object_id) const;
};

/// Segmenter transport or protocol failure mid-run; carries what was done so far.
class PropagationAborted : public Error {
 public:
  PropagationAborted(const Error& cause, PropagationResult partial)
      : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}
  const PropagationResult& partial() const { return partial_; }

 private:
  PropagationResult partial_;
};

PropagationResult propagate(const SparseCloud& cloud, std::span<const ViewImage> views,
                            std::span<const ObjectSeed> objects, Segmenter& segmenter,
                            const PropagationConfig& cfg);

/// Rebuilds an object's point list from its accepted masks: union of in-mask
/// points, then pruning of points seen in fewer than cfg.min_track_hits masks.
ObjectPointList collect_object_points(const SparseCloud& cloud, const std::map<int, Mask>& masks,
                                      const PropagationConfig& cfg, int object_id);

/// Sub-cloud of the listed points. Feature lists are kept whole so track
/// indices stay valid; features of other points lose their link.
SparseCloud export_object_cloud(const SparseCloud& cloud, const ObjectPointList& list);

/// Writes <dir>/obj<K>_view<V>.png (0/255) and <dir>/index.json.
void write_masks(const std::filesystem::path& dir,
                 const std::map<int, std::map<int, Mask>>& masks);
std::map<int, std::map<int, Mask>> read_masks(const std::filesystem::path& dir);

}  // namespace segfield
