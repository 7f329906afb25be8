#include "fhsst/montage.hpp"

#include "fhsst/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fhsst {

static_assert(std::endian::native == std::endian::little, "cube files assume a little-endian host");

void MontageConfig::validate() const {
  if (patch_size < 1 || stride < 1 || roi_height < 1 || roi_width < 1)
    fail(Errc::InvalidConfig, "montage sizes and stride must be >= 1");
  const GridDims grid = patch_grid_dims(roi_height, roi_width, patch_size, stride);
  if (grid.count() != expected_depth)
    fail(Errc::InvalidConfig, "grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                                  " holds " + std::to_string(grid.count()) + " patches, expected depth " +
                                  std::to_string(expected_depth));
}

nlohmann::json to_json(const MontageConfig& cfg) {
  return {{"preset", cfg.preset_name},      {"roi_height", cfg.roi_height}, {"roi_width", cfg.roi_width},
          {"patch_size", cfg.patch_size},   {"stride", cfg.stride},         {"expected_depth", cfg.expected_depth}};
}

MontageConfig montage_from_json(const nlohmann::json& j) {
  try {
    MontageConfig cfg;
    cfg.preset_name = j.value("preset", std::string("custom"));
    cfg.roi_height = j.at("roi_height").get<int>();
    cfg.roi_width = j.at("roi_width").get<int>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.stride = j.at("stride").get<int>();
    cfg.expected_depth = j.at("expected_depth").get<int>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidConfig, std::string("montage config: ") + e.what());
  }
}

MontageConfig montage_from_grid(const std::string& name, int patch, int stride, int rows, int cols) {
  MontageConfig cfg;
  cfg.preset_name = name;
  cfg.patch_size = patch;
  cfg.stride = stride;
  cfg.roi_height = patch + (rows - 1) * stride;
  cfg.roi_width = patch + (cols - 1) * stride;
  cfg.expected_depth = rows * cols;
  return cfg;
}

MontageConfig montage_preset(const std::string& name) {
  if (name == "paper-stated") return montage_from_grid(name, 170, 5, 6, 10);
  if (name == "shape-consistent") return montage_from_grid(name, 224, 5, 8, 10);
  if (name == "smoke") return montage_from_grid(name, 64, 5, 4, 4);
  fail(Errc::InvalidConfig, "unknown montage preset '" + name + "' (expected paper-stated|shape-consistent|smoke)");
}

GridDims patch_grid_dims(int h, int w, int p, int s) {
  if (p < 1 || s < 1) fail(Errc::InvalidConfig, "patch size and stride must be >= 1");
  if (p > h || p > w)
    fail(Errc::NonExactGrid, "patch " + std::to_string(p) + " larger than " + std::to_string(h) + "x" + std::to_string(w));
  if ((h - p) % s != 0 || (w - p) % s != 0)
    fail(Errc::NonExactGrid, "(" + std::to_string(h) + "-" + std::to_string(p) + ") or (" + std::to_string(w) + "-" +
                                 std::to_string(p) + ") not divisible by stride " + std::to_string(s) + "; resize first");
  return {(h - p) / s + 1, (w - p) / s + 1};
}

RoiImage resize_bilinear(const RoiImage& img, int height, int width) {
  if (img.height < 1 || img.width < 1) fail(Errc::InvalidConfig, "cannot resize an empty image");
  if (height < 1 || width < 1) fail(Errc::InvalidConfig, "target size must be positive");
  if (img.height == height && img.width == width) return img;

  RoiImage out(height, width);
  out.source_id = img.source_id;
  const double sy = double(img.height) / height;
  const double sx = double(img.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img(y0, x0, c) * (1 - wx) + img(y0, x1, c) * wx;
        const double bottom = img(y1, x0, c) * (1 - wx) + img(y1, x1, c) * wx;
        out(y, x, c) = static_cast<float>(std::clamp(top * (1 - wy) + bottom * wy, 0.0, 1.0));
      }
    }
  }
  return out;
}

RoiImage resize_roi(const RoiImage& img, const MontageConfig& cfg) {
  return resize_bilinear(img, cfg.roi_height, cfg.roi_width);
}

MontageCube build_cube(const RoiImage& img, const MontageConfig& cfg) {
  if (img.height != cfg.roi_height || img.width != cfg.roi_width)
    fail(Errc::ShapeMismatch, "image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                  " does not match ROI " + std::to_string(cfg.roi_height) + "x" +
                                  std::to_string(cfg.roi_width));
  const GridDims grid = patch_grid_dims(cfg.roi_height, cfg.roi_width, cfg.patch_size, cfg.stride);
  if (grid.count() != cfg.expected_depth)
    fail(Errc::NonExactGrid, "grid holds " + std::to_string(grid.count()) + " patches, expected " +
                                 std::to_string(cfg.expected_depth));
  const int p = cfg.patch_size;
  MontageCube cube;
  cube.config = cfg;
  cube.source_id = img.source_id;
  cube.data = Tensor4<float>(cfg.cube_shape());
  const float* src = img.pixels.data();
  float* dst = cube.data.data.data();
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const int k = r * grid.cols + c;
      for (int y = 0; y < p; ++y) {
        const float* row = src + (Eigen::Index(r * cfg.stride + y) * img.width + c * cfg.stride) * 3;
        std::copy(row, row + 3 * p, dst + cube.data.row(k, y, 0) * 3);
      }
    }
  }
  return cube;
}

std::filesystem::path cube_sidecar(const std::filesystem::path& path) {
  auto side = path;
  side += ".json";
  return side;
}

void write_cube(const std::filesystem::path& path, const MontageCube& cube, const nlohmann::json& extra_meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  const Shape4& s = cube.data.shape;
  const std::array<std::int32_t, 4> header{s.t, s.h, s.w, s.c};
  out.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
  const std::uint32_t tag = kCubeDtypeFloat32;
  out.write(reinterpret_cast<const char*>(&tag), sizeof(tag));
  out.write(reinterpret_cast<const char*>(cube.data.data.data()),
            static_cast<std::streamsize>(cube.data.data.size() * sizeof(float)));
  if (!out) fail(Errc::IoFailure, "short write to " + path.string());

  nlohmann::json meta = extra_meta;
  meta["source_id"] = cube.source_id;
  meta["preset_name"] = cube.config.preset_name;
  meta["normalization"] = cube.normalization;
  meta["montage"] = to_json(cube.config);
  std::ofstream side(cube_sidecar(path), std::ios::trunc);
  side << meta.dump(2) << '\n';
  if (!side) fail(Errc::IoFailure, "cannot write sidecar for " + path.string());
}

Tensor4<float> read_cube_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  std::array<std::int32_t, 4> header{};
  std::uint32_t tag = 0;
  in.read(reinterpret_cast<char*>(header.data()), sizeof(header));
  in.read(reinterpret_cast<char*>(&tag), sizeof(tag));
  if (!in) fail(Errc::IoFailure, "truncated cube header in " + path.string());
  if (tag != kCubeDtypeFloat32) fail(Errc::IoFailure, "unsupported cube dtype tag " + std::to_string(tag));
  const Shape4 shape{header[0], header[1], header[2], header[3]};
  if (!shape.positive()) fail(Errc::IoFailure, "bad cube shape " + to_string(shape));
  Tensor4<float> t(shape);
  in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!in) fail(Errc::IoFailure, "truncated cube payload in " + path.string());
  return t;
}

MontageCube read_cube(const std::filesystem::path& path) {
  MontageCube cube;
  cube.data = read_cube_payload(path);
  const auto side = cube_sidecar(path);
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    const auto meta = nlohmann::json::parse(in, nullptr, false);
    if (meta.is_discarded()) fail(Errc::IoFailure, "malformed sidecar " + side.string());
    cube.source_id = meta.value("source_id", std::string());
    cube.normalization = meta.value("normalization", std::string("divide-255"));
    if (meta.contains("montage")) cube.config = montage_from_json(meta["montage"]);
  }
  return cube;
}

}  // namespace fhsst
