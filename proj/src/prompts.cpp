#include "segfield/prompts.hpp"

#include <string>

#include "segfield/error.hpp"

namespace segfield {

namespace {
bool inside(double u, double v, int width, int height) {
  return u >= -0.5 && v >= -0.5 && u < width - 0.5 && v < height - 0.5;
}
}  // namespace

void PromptSet::validate(int width, int height) const {
  for (const auto& p : points) {
    if (!inside(p.u, p.v, width, height)) {
      throw Error(Errc::invalid_argument, "point prompt (" + std::to_string(p.u) + ", " +
                                              std::to_string(p.v) + ") outside the image");
    }
  }
  if (box) {
    if (!(box->u_min <= box->u_max && box->v_min <= box->v_max)) {
      throw Error(Errc::invalid_argument, "prompt box is not well ordered");
    }
    if (!inside(box->u_min, box->v_min, width, height) ||
        !inside(box->u_max, box->v_max, width, height)) {
      throw Error(Errc::invalid_argument, "prompt box outside the image");
    }
  }
}

}  // namespace segfield
