#include "segfield/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "segfield/error.hpp"

namespace segfield {
namespace {

std::uint8_t to_u8(float c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0f, 1.0f) * 255.0f));
}

cv::Mat to_bgr8(const RgbImage& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      const auto& c = image(x, y);
      row[x] = cv::Vec3b(to_u8(c.z()), to_u8(c.y()), to_u8(c.x()));
    }
  }
  return mat;
}

RgbImage from_bgr8(const cv::Mat& mat) {
  RgbImage image(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      image(x, y) = Eigen::Vector3f(row[x][2], row[x][1], row[x][0]) / 255.0f;
    }
  }
  return image;
}

cv::Mat read_or_throw(const std::filesystem::path& path, int flags) {
  cv::Mat mat = cv::imread(path.string(), flags);
  if (mat.empty()) throw Error(Errc::io, "cannot read image " + path.string());
  return mat;
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw Error(Errc::io, "cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw Error(Errc::io, "cannot write image " + path.string());
}

}  // namespace

RgbImage read_rgb_png(const std::filesystem::path& path) {
  return from_bgr8(read_or_throw(path, cv::IMREAD_COLOR));
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
  write_or_throw(path, to_bgr8(image));
}

void write_rgba_png(const std::filesystem::path& path, const RgbImage& image,
                    const Raster<float>& alpha) {
  cv::Mat mat(image.height(), image.width(), CV_8UC4);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec4b>(y);
    for (int x = 0; x < image.width(); ++x) {
      const auto& c = image(x, y);
      row[x] = cv::Vec4b(to_u8(c.z()), to_u8(c.y()), to_u8(c.x()), to_u8(alpha(x, y)));
    }
  }
  write_or_throw(path, mat);
}

DepthMap read_depth_png(const std::filesystem::path& path, double scale) {
  const cv::Mat mat = read_or_throw(path, cv::IMREAD_ANYDEPTH);
  if (mat.type() != CV_16UC1) {
    throw Error(Errc::parse, "depth image must be 16-bit single channel: " + path.string());
  }
  DepthMap depth(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < mat.cols; ++x) depth(x, y) = static_cast<float>(row[x] * scale);
  }
  return depth;
}

void write_depth_png(const std::filesystem::path& path, const DepthMap& depth, double scale) {
  cv::Mat mat(depth.height(), depth.width(), CV_16UC1);
  for (int y = 0; y < depth.height(); ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < depth.width(); ++x) {
      const double stored = std::round(depth(x, y) / scale);
      row[x] = static_cast<std::uint16_t>(std::clamp(stored, 0.0, 65535.0));
    }
  }
  write_or_throw(path, mat);
}

BitMask read_mask_png(const std::filesystem::path& path) {
  const cv::Mat mat = read_or_throw(path, cv::IMREAD_GRAYSCALE);
  BitMask mask(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) mask(x, y) = row[x] >= 128 ? 1 : 0;
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const BitMask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width(); ++x) row[x] = mask(x, y) ? 255 : 0;
  }
  write_or_throw(path, mat);
}

InstanceMap read_instance_png(const std::filesystem::path& path) {
  const cv::Mat mat = read_or_throw(path, cv::IMREAD_ANYDEPTH);
  if (mat.type() != CV_16UC1) {
    throw Error(Errc::parse, "instance image must be 16-bit single channel: " + path.string());
  }
  InstanceMap ids(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < mat.cols; ++x) ids(x, y) = row[x];
  }
  return ids;
}

void write_instance_png(const std::filesystem::path& path, const InstanceMap& instances) {
  cv::Mat mat(instances.height(), instances.width(), CV_16UC1);
  for (int y = 0; y < instances.height(); ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < instances.width(); ++x) {
      row[x] = static_cast<std::uint16_t>(std::clamp(instances(x, y), 0, 65535));
    }
  }
  write_or_throw(path, mat);
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_bgr8(image), bytes)) {
    throw Error(Errc::io, "PNG encoding failed");
  }
  return bytes;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1,
                       const_cast<std::uint8_t*>(bytes.data()));
  const cv::Mat mat = cv::imdecode(buffer, cv::IMREAD_COLOR);
  if (mat.empty()) throw Error(Errc::parse, "invalid PNG payload");
  return from_bgr8(mat);
}

}  // namespace segfield
