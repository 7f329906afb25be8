#pragma once

#include "fhsst/image.hpp"
#include "fhsst/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace fhsst {

/// Overlapping-patch layout. The ROI is tiled by P x P patches at stride S;
/// the grid must cover the ROI exactly and hold `expected_depth` patches.
struct MontageConfig {
  int roi_height = 0;
  int roi_width = 0;
  int patch_size = 0;
  int stride = 1;
  int expected_depth = 0;
  std::string preset_name;

  /// Throws InvalidConfig / NonExactGrid when the layout is inconsistent.
  void validate() const;
  Shape4 cube_shape() const { return {expected_depth, patch_size, patch_size, 3}; }
};

nlohmann::json to_json(const MontageConfig& cfg);
MontageConfig montage_from_json(const nlohmann::json& j);

/// Builds a config whose ROI is exactly covered by a rows x cols grid:
/// roi = P + (n - 1) * S along each axis.
MontageConfig montage_from_grid(const std::string& name, int patch, int stride, int rows, int cols);

/// "paper-stated" (60 patches of 170 px, 6x10 grid), "shape-consistent"
/// (80 patches of 224 px, 8x10 grid) or "smoke" (16 patches of 64 px, 4x4).
MontageConfig montage_preset(const std::string& name);

struct GridDims {
  int rows = 0;
  int cols = 0;
  int count() const { return rows * cols; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// rows = (h - p) / s + 1, cols = (w - p) / s + 1; NonExactGrid unless both
/// divisions are exact.
GridDims patch_grid_dims(int h, int w, int p, int s);

/// Bilinear resize with half-pixel centers and edge clamping. Same-size input
/// is returned unchanged.
RoiImage resize_bilinear(const RoiImage& img, int height, int width);
RoiImage resize_roi(const RoiImage& img, const MontageConfig& cfg);

/// D x P x P x 3 stack of patches; slice k = r * cols + c is the patch whose
/// top-left corner is (r * S, c * S).
struct MontageCube {
  Tensor4<float> data;
  MontageConfig config;
  std::string source_id;
  std::string normalization = "divide-255";
};

MontageCube build_cube(const RoiImage& img, const MontageConfig& cfg);

/// Binary cube container, little-endian:
///   int32 D, int32 P, int32 P, int32 C   shape header
///   uint32 dtype tag                      1 = float32
///   float32[D*P*P*C]                      row-major (d, y, x, c) payload
/// A sidecar `<file>.json` records source_id, preset, normalization and the
/// montage layout.
inline constexpr std::uint32_t kCubeDtypeFloat32 = 1;

void write_cube(const std::filesystem::path& path, const MontageCube& cube,
                const nlohmann::json& extra_meta = nlohmann::json::object());
MontageCube read_cube(const std::filesystem::path& path);
Tensor4<float> read_cube_payload(const std::filesystem::path& path);
std::filesystem::path cube_sidecar(const std::filesystem::path& path);

}  // namespace fhsst
