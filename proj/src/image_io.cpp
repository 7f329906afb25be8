#include "fhsst/image.hpp"

#include "fhsst/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace fhsst {

RoiImage read_image(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(Errc::IoFailure, "cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(Errc::IoFailure, "cannot decode " + path.string() + ": " + image.message);
  }
  RoiImage out(static_cast<int>(image.height), static_cast<int>(image.width));
  out.source_id = path.filename().string();
  for (Eigen::Index i = 0; i < out.pixels.size(); ++i) out.pixels.data()[i] = buffer[i] / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const RoiImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.pixels.size()));
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels.data()[i], 0.0f, 1.0f);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
    fail(Errc::IoFailure, "cannot write " + path.string() + ": " + image.message);
}

}  // namespace fhsst
