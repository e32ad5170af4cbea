#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segfield {

enum class Errc {
  parse,
  unsupported_model,
  integrity,
  io,
  invalid_argument,
  dimension_mismatch,
  empty_mask,
  uninitializable_object,
  insufficient_points,
  not_found,
  band_empty,
  empty_object,
  degenerate_box,
  no_accepted_views,
  non_intersecting_ray,
  transport,
  protocol,
  divergence,
};

std::string_view to_string(Errc code);

/// Coarse classes used for process exit codes.
enum class ErrorClass { other, parse, data_integrity, segmenter_transport, divergence };

ErrorClass classify(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace segfield
