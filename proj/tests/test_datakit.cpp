#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fhsst/datakit.hpp"
#include "fhsst/errors.hpp"
#include "fhsst/hash.hpp"
#include "fhsst/image.hpp"
#include "fixtures.hpp"

#include <filesystem>
#include <fstream>

using namespace fhsst;
using fixture::TempDir;
namespace fs = std::filesystem;

namespace {

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << "x";
}

std::string tree_hash(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  Fnv1a64 h;
  for (const auto& f : files) {
    h.update(f.string());
    h.update(hash_file_hex(root / f));
  }
  return h.hex();
}

double mse(const RoiImage& a, const RoiImage& b) { return (a.pixels - b.pixels).squaredNorm() / a.pixels.size(); }

}  // namespace

TEST_CASE("manifest loading") {
  TempDir dir("fhsst_test_manifest");
  SUBCASE("2 subjects x 2 sessions x 5 images") {
    for (const auto* s : {"bob", "alice"})
      for (const auto* k : {"s2", "s1"})
        for (int i = 0; i < 5; ++i) touch(dir.path / s / k / ("img" + std::to_string(i) + ".png"));
    touch(dir.path / "alice" / "s1" / ".hidden.png");
    touch(dir.path / "alice" / "s1" / "notes.json");
    const DatasetManifest m = load_manifest(dir.path);
    CHECK(m.sample_count() == 20);
    REQUIRE(m.subjects.size() == 2);
    CHECK(m.subjects[0].subject_id == "alice");
    CHECK(m.subjects[0].sessions[0].session_id == "s1");
    const auto samples = m.samples();
    CHECK(samples.front().sample_id == "alice/s1/img0");
    CHECK(samples.back().sample_id == "bob/s2/img4");

    write_manifest_index(m, dir.path / kManifestIndexName);
    const DatasetManifest back = read_manifest_index(dir.path / kManifestIndexName);
    CHECK(to_json(back) == to_json(m));
  }
  SUBCASE("empty root") {
    try {
      load_manifest(dir.path);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyDataset);
    }
  }
  SUBCASE("image outside a session directory") {
    touch(dir.path / "alice" / "img0.png");
    try {
      load_manifest(dir.path);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MalformedLayout);
    }
  }
  SUBCASE("index listing a missing file") {
    touch(dir.path / "a" / "s" / "x.png");
    const DatasetManifest m = load_manifest(dir.path);
    write_manifest_index(m, dir.path / kManifestIndexName);
    fs::remove(dir.path / "a" / "s" / "x.png");
    CHECK_THROWS_AS(read_manifest_index(dir.path / kManifestIndexName), Error);
  }
  SUBCASE("247 subjects with 20 images") {
    for (int s = 0; s < 247; ++s)
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 10; ++i)
          touch(dir.path / ("p" + std::to_string(s)) / ("sess" + std::to_string(k)) / (std::to_string(i) + ".png"));
    const DatasetManifest m = load_manifest(dir.path);
    CHECK(m.subjects.size() == 247);
    CHECK(m.sample_count() == 4940);
  }
}

TEST_CASE("synthetic generator") {
  SynthSpec spec;
  spec.num_subjects = 3;
  spec.samples_per_subject = 4;
  spec.image_height = 24;
  spec.image_width = 32;

  SUBCASE("same seed gives identical trees") {
    TempDir a("fhsst_test_synth_a"), b("fhsst_test_synth_b");
    const DatasetManifest ma = generate_synthetic(spec, a.path);
    generate_synthetic(spec, b.path);
    CHECK(tree_hash(a.path) == tree_hash(b.path));
    CHECK(ma.sample_count() == 12);
    CHECK(ma.subjects[0].sessions.size() == 2);
    CHECK(to_json(load_manifest(a.path))["subjects"] == to_json(ma)["subjects"]);
    const RoiImage img = read_image(ma.samples()[0].path);
    CHECK(img.height == 24);
    CHECK(img.width == 32);
    CHECK(img.pixels.minCoeff() >= 0.0f);
    CHECK(img.pixels.maxCoeff() <= 1.0f);
  }
  SUBCASE("different seeds differ") {
    SynthSpec other = spec;
    other.seed = spec.seed + 1;
    CHECK(render_synthetic(spec, 0, 0).pixels != render_synthetic(other, 0, 0).pixels);
  }
  SUBCASE("zero jitter makes all samples of a subject identical") {
    SynthSpec still = spec;
    still.warp_amplitude = 0;
    still.brightness_range = 0;
    still.noise_sigma = 0;
    for (int s = 0; s < 3; ++s)
      for (int i = 1; i < 4; ++i) CHECK(render_synthetic(still, s, i).pixels == render_synthetic(still, s, 0).pixels);
  }
  SUBCASE("invalid spec") {
    SynthSpec bad = spec;
    bad.num_subjects = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = spec;
    bad.noise_sigma = -1;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
  SUBCASE("spec JSON round trip") { CHECK(to_json(synth_from_json(to_json(spec))) == to_json(spec)); }
}

TEST_CASE("synthetic identities are separable") {
  const SynthSpec spec;  // 20 subjects x 10 samples, default jitter
  std::vector<RoiImage> imgs;
  std::vector<int> label;
  for (int s = 0; s < spec.num_subjects; ++s)
    for (int i = 0; i < spec.samples_per_subject; ++i) {
      imgs.push_back(render_synthetic(spec, s, i));
      label.push_back(s);
    }
  double within = 0, between = 0;
  std::size_t nw = 0, nb = 0, correct = 0;
  for (std::size_t a = 0; a < imgs.size(); ++a) {
    double best = 1e30;
    int best_label = -1;
    for (std::size_t b = 0; b < imgs.size(); ++b) {
      if (a == b) continue;
      const double d = mse(imgs[a], imgs[b]);
      if (label[a] == label[b])
        within += d, ++nw;
      else
        between += d, ++nb;
      if (d < best) best = d, best_label = label[b];
    }
    correct += best_label == label[a];
  }
  within /= nw;
  between /= nb;
  const double rank1 = double(correct) / imgs.size();
  INFO("within " << within << " between " << between << " rank-1 " << rank1);
  CHECK(within < between);
  CHECK(rank1 > 0.8);
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(7, "s001") == derive_seed(7, "s001"));
  CHECK(derive_seed(7, "s001") != derive_seed(7, "s002"));
  CHECK(derive_seed(7, "s001") != derive_seed(8, "s001"));
}
