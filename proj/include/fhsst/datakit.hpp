#pragma once

#include "fhsst/image.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fhsst {

struct SessionEntry {
  std::string session_id;
  std::vector<std::string> files;  // relative to the manifest root
};

struct SubjectEntry {
  std::string subject_id;
  std::vector<SessionEntry> sessions;

  std::size_t sample_count() const;
};

/// One sample flattened out of the subject/session tree.
struct SampleRecord {
  std::string sample_id;  // "subject/session/stem"
  std::string subject_id;
  std::string session_id;
  std::filesystem::path path;  // absolute
};

/// Subjects -> sessions -> files. Ordering is lexicographic at every level.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<SubjectEntry> subjects;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t sample_count() const;
  std::vector<SampleRecord> samples() const;
};

inline constexpr const char* kManifestIndexName = "manifest.json";

std::string sample_id_for(const std::string& subject, const std::string& session, const std::filesystem::path& file);

/// Scans `root/subject/session/file` for .png or .cube files. Throws
/// EmptyDataset when nothing is found and MalformedLayout when files sit
/// outside session directories or sessions contain directories.
DatasetManifest load_manifest(const std::filesystem::path& root);

/// Structured-text index (`manifest.json`) with the same content.
void write_manifest_index(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_index(const std::filesystem::path& path);
nlohmann::json to_json(const DatasetManifest& manifest);

/// Seeded forehead-crease generator. Each subject owns a base pattern of
/// oriented dark bands on a skin-toned background; each sample adds a smooth
/// elastic warp, a brightness scale and Gaussian pixel noise.
struct SynthSpec {
  int num_subjects = 20;
  int samples_per_subject = 10;
  int sessions = 2;
  int image_height = 96;
  int image_width = 128;
  std::uint64_t seed = 7;
  double warp_amplitude = 1.5;   // pixels
  double brightness_range = 0.1;  // scale drawn from [1 - r, 1 + r]
  double noise_sigma = 0.02;

  void validate() const;
};

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_from_json(const nlohmann::json& j);

std::uint64_t derive_seed(std::uint64_t seed, const std::string& key);

/// Renders sample `index` of subject `subject` without touching disk.
RoiImage render_synthetic(const SynthSpec& spec, int subject, int index);

/// Writes `out/sNNN/sessK/imgNN.png` plus the index file. Samples are dealt
/// to sessions in contiguous runs. Output depends only on `spec`.
DatasetManifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out);

}  // namespace fhsst
