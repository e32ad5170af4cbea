#pragma once

#include <optional>
#include <vector>

namespace segfield {

enum class Polarity { negative = 0, positive = 1 };

struct PointPrompt {
  double u = 0.0;
  double v = 0.0;
  Polarity polarity = Polarity::positive;
  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

/// Inclusive pixel box (u_min, v_min) .. (u_max, v_max).
struct Box {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
};

struct PromptSet {
  std::vector<PointPrompt> points;
  std::optional<Box> box;

  bool empty() const noexcept { return points.empty() && !box; }
  /// Throws invalid_argument unless every coordinate is inside a width x height
  /// image and the box is well ordered.
  void validate(int width, int height) const;

  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

}  // namespace segfield
