#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace segfield {

/// Row-major 2D array addressed as (x, y) = (column, row).
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, const T& fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) {
    assert(contains(x, y));
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const T& operator()(int x, int y) const {
    assert(contains(x, y));
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(int width, int height) const noexcept {
    return width_ == width && height_ == height;
  }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using BitMask = Raster<std::uint8_t>;
using DepthMap = Raster<float>;
using RgbImage = Raster<Eigen::Vector3f>;
using InstanceMap = Raster<std::int32_t>;

std::size_t count_set(const BitMask& mask);

}  // namespace segfield
