#pragma once

#include "segfield/raster.hpp"

namespace segfield {

/// Exact Euclidean distance from each in-mask pixel to the nearest
/// out-of-mask pixel, treating everything beyond the image border as outside.
/// Out-of-mask pixels get 0.
Raster<float> distance_to_outside(const BitMask& mask);

/// Keeps pixels farther than `radius_px` from the outside; radius 0 is identity.
BitMask erode(const BitMask& mask, int radius_px);

BitMask complement(const BitMask& mask);

/// |A and B| / |A or B|, 0 when both are empty. Throws on size mismatch.
double mask_iou(const BitMask& a, const BitMask& b);

}  // namespace segfield
