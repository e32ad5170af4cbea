#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "segfield/raster.hpp"

namespace segfield {

// 8-bit and 16-bit PNG boundaries. Colors are linear floats in [0, 1] in memory.

RgbImage read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);
/// RGBA with `alpha` in [0, 1].
void write_rgba_png(const std::filesystem::path& path, const RgbImage& image,
                    const Raster<float>& alpha);

/// 16-bit depth PNG: stored value * scale = scene units; 0 means missing.
DepthMap read_depth_png(const std::filesystem::path& path, double scale);
void write_depth_png(const std::filesystem::path& path, const DepthMap& depth, double scale);

BitMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BitMask& mask);

InstanceMap read_instance_png(const std::filesystem::path& path);
void write_instance_png(const std::filesystem::path& path, const InstanceMap& instances);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
RgbImage decode_png(std::span<const std::uint8_t> bytes);

}  // namespace segfield
