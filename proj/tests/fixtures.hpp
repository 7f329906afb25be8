#pragma once

#include "fhsst/backbone.hpp"
#include "fhsst/datakit.hpp"
#include "fhsst/image.hpp"
#include "fhsst/montage.hpp"

#include <filesystem>
#include <string>

namespace fixture {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// 2x2 grid of 32 px patches at stride 16: 4 x 32 x 32 x 3 cubes from a 48 x 48 ROI.
inline fhsst::MontageConfig small_montage() { return fhsst::montage_from_grid("test", 32, 16, 2, 2); }

inline fhsst::BackboneConfig small_backbone() { return fhsst::reduced_backbone(small_montage().cube_shape()); }

// Synthetic images under dir/raw, cubes under dir/cubes; returns the cube manifest.
inline fhsst::DatasetManifest make_cube_dataset(const fs::path& dir, const fhsst::SynthSpec& spec,
                                                const fhsst::MontageConfig& montage = small_montage()) {
  const fhsst::DatasetManifest raw = fhsst::generate_synthetic(spec, dir / "raw");
  for (const auto& r : raw.samples()) {
    fhsst::RoiImage img = fhsst::read_image(r.path);
    fhsst::MontageCube cube = fhsst::build_cube(fhsst::resize_roi(img, montage), montage);
    cube.source_id = r.sample_id;
    const fs::path dst = dir / "cubes" / r.subject_id / r.session_id / (r.path.stem().string() + ".cube");
    fs::create_directories(dst.parent_path());
    fhsst::write_cube(dst, cube);
  }
  return fhsst::load_manifest(dir / "cubes");
}

}  // namespace fixture
