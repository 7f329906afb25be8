#pragma once

#include "fhsst/tensor.hpp"

#include <filesystem>
#include <string>

namespace fhsst {

/// Cropped forehead region, RGB, values in [0, 1]. Pixel (y, x) is row
/// y * width + x of `pixels`.
struct RoiImage {
  int height = 0;
  int width = 0;
  RowMatrix<float> pixels;
  std::string source_id;

  RoiImage() = default;
  RoiImage(int h, int w) : height(h), width(w), pixels(RowMatrix<float>::Zero(Eigen::Index(h) * w, 3)) {}

  float& operator()(int y, int x, int c) { return pixels(Eigen::Index(y) * width + x, c); }
  float operator()(int y, int x, int c) const { return pixels(Eigen::Index(y) * width + x, c); }
};

/// Reads an 8-bit image (PNG, any color type) and divides by 255.
RoiImage read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG, rounding v * 255 after clamping to [0, 1].
void write_png(const std::filesystem::path& path, const RoiImage& img);

}  // namespace fhsst
