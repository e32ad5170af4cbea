#include "segfield/error.hpp"

namespace segfield {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::parse: return "parse";
    case Errc::unsupported_model: return "unsupported-model";
    case Errc::integrity: return "integrity";
    case Errc::io: return "io";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::empty_mask: return "empty-mask";
    case Errc::uninitializable_object: return "uninitializable-object";
    case Errc::insufficient_points: return "insufficient-points";
    case Errc::not_found: return "not-found";
    case Errc::band_empty: return "band-empty";
    case Errc::empty_object: return "empty-object";
    case Errc::degenerate_box: return "degenerate-box";
    case Errc::no_accepted_views: return "no-accepted-views";
    case Errc::non_intersecting_ray: return "non-intersecting-ray";
    case Errc::transport: return "transport";
    case Errc::protocol: return "protocol";
    case Errc::divergence: return "divergence";
  }
  return "unknown";
}

ErrorClass classify(Errc code) {
  switch (code) {
    case Errc::parse:
      return ErrorClass::parse;
    case Errc::unsupported_model:
    case Errc::integrity:
    case Errc::dimension_mismatch:
    case Errc::empty_mask:
    case Errc::uninitializable_object:
    case Errc::insufficient_points:
    case Errc::not_found:
    case Errc::band_empty:
    case Errc::empty_object:
    case Errc::degenerate_box:
    case Errc::no_accepted_views:
      return ErrorClass::data_integrity;
    case Errc::transport:
    case Errc::protocol:
      return ErrorClass::segmenter_transport;
    case Errc::divergence:
      return ErrorClass::divergence;
    case Errc::io:
    case Errc::invalid_argument:
    case Errc::non_intersecting_ray:
      return ErrorClass::other;
  }
  return ErrorClass::other;
}

}  // namespace segfield
