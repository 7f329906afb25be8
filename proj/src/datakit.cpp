#include "fhsst/datakit.hpp"

#include "fhsst/errors.hpp"
#include "fhsst/hash.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace fhsst {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t SubjectEntry::sample_count() const {
  std::size_t n = 0;
  for (const auto& s : sessions) n += s.files.size();
  return n;
}

std::size_t DatasetManifest::sample_count() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.sample_count();
  return n;
}

std::string sample_id_for(const std::string& subject, const std::string& session, const fs::path& file) {
  return subject + "/" + session + "/" + file.stem().string();
}

std::vector<SampleRecord> DatasetManifest::samples() const {
  std::vector<SampleRecord> out;
  out.reserve(sample_count());
  for (const auto& subject : subjects)
    for (const auto& session : subject.sessions)
      for (const auto& file : session.files)
        out.push_back({sample_id_for(subject.subject_id, session.session_id, file), subject.subject_id,
                       session.session_id, root / file});
  return out;
}

namespace {

bool is_sample_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".png" || ext == ".cube";
}

bool ignored(const fs::path& p) {
  const auto name = p.filename().string();
  return name.empty() || name.front() == '.' || name == kManifestIndexName || p.extension() == ".json" ||
         p.extension() == ".csv";
}

std::vector<fs::directory_entry> sorted_entries(const fs::path& dir) {
  std::vector<fs::directory_entry> entries;
  for (const auto& e : fs::directory_iterator(dir))
    if (!ignored(e.path())) entries.push_back(e);
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.path().filename() < b.path().filename(); });
  return entries;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root) {
  if (!fs::is_directory(root)) fail(Errc::EmptyDataset, root.string() + " is not a directory");
  DatasetManifest m;
  m.root = fs::absolute(root);
  for (const auto& subject_dir : sorted_entries(root)) {
    if (!subject_dir.is_directory())
      fail(Errc::MalformedLayout, "unexpected file at subject level: " + subject_dir.path().string());
    SubjectEntry subject;
    subject.subject_id = subject_dir.path().filename().string();
    for (const auto& session_dir : sorted_entries(subject_dir.path())) {
      if (!session_dir.is_directory())
        fail(Errc::MalformedLayout, "file outside a session directory: " + session_dir.path().string());
      SessionEntry session;
      session.session_id = session_dir.path().filename().string();
      for (const auto& file : sorted_entries(session_dir.path())) {
        if (file.is_directory())
          fail(Errc::MalformedLayout, "nested directory inside a session: " + file.path().string());
        if (!is_sample_file(file.path())) continue;
        session.files.push_back(fs::relative(file.path(), m.root).generic_string());
      }
      if (!session.files.empty()) subject.sessions.push_back(std::move(session));
    }
    if (!subject.sessions.empty()) m.subjects.push_back(std::move(subject));
  }
  if (m.subjects.empty()) fail(Errc::EmptyDataset, "no samples under " + root.string());
  return m;
}

nlohmann::json to_json(const DatasetManifest& manifest) {
  json subjects = json::array();
  for (const auto& s : manifest.subjects) {
    json sessions = json::array();
    for (const auto& sess : s.sessions) sessions.push_back({{"session_id", sess.session_id}, {"files", sess.files}});
    subjects.push_back({{"subject_id", s.subject_id}, {"sessions", sessions}});
  }
  return {{"subjects", subjects},
          {"metadata", manifest.metadata},
          {"counts", {{"subjects", manifest.subjects.size()}, {"samples", manifest.sample_count()}}}};
}

void write_manifest_index(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out << to_json(manifest).dump(2) << '\n';
}

DatasetManifest read_manifest_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(Errc::MalformedLayout, "malformed manifest index " + path.string());
  DatasetManifest m;
  m.root = fs::absolute(path).parent_path();
  m.metadata = j.value("metadata", json::object());
  for (const auto& js : j.at("subjects")) {
    SubjectEntry s;
    s.subject_id = js.at("subject_id").get<std::string>();
    for (const auto& jsess : js.at("sessions"))
      s.sessions.push_back({jsess.at("session_id").get<std::string>(), jsess.at("files").get<std::vector<std::string>>()});
    m.subjects.push_back(std::move(s));
  }
  for (const auto& rec : m.samples())
    if (!fs::exists(rec.path)) fail(Errc::MalformedLayout, "manifest lists missing file " + rec.path.string());
  if (m.subjects.empty()) fail(Errc::EmptyDataset, "manifest " + path.string() + " lists no subjects");
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthSpec::validate() const {
  if (num_subjects < 1 || samples_per_subject < 1 || sessions < 1 || image_height < 1 || image_width < 1)
    fail(Errc::InvalidConfig, "synthetic counts and sizes must be >= 1");
  if (warp_amplitude < 0 || brightness_range < 0 || noise_sigma < 0)
    fail(Errc::InvalidConfig, "jitter amplitudes must be >= 0");
}

nlohmann::json to_json(const SynthSpec& s) {
  return {{"num_subjects", s.num_subjects},   {"samples_per_subject", s.samples_per_subject},
          {"sessions", s.sessions},           {"image_height", s.image_height},
          {"image_width", s.image_width},     {"seed", s.seed},
          {"warp_amplitude", s.warp_amplitude}, {"brightness_range", s.brightness_range},
          {"noise_sigma", s.noise_sigma}};
}

SynthSpec synth_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.num_subjects = j.value("num_subjects", s.num_subjects);
  s.samples_per_subject = j.value("samples_per_subject", s.samples_per_subject);
  s.sessions = j.value("sessions", s.sessions);
  s.image_height = j.value("image_height", s.image_height);
  s.image_width = j.value("image_width", s.image_width);
  s.seed = j.value("seed", s.seed);
  s.warp_amplitude = j.value("warp_amplitude", s.warp_amplitude);
  s.brightness_range = j.value("brightness_range", s.brightness_range);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  return s;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) {
  Fnv1a64 h;
  h.update_pod(seed);
  h.update(key);
  return h.digest();
}

namespace {

struct Band {
  double cos_a, sin_a;
  double offset, curvature, width, depth, lo, hi;
};

struct Identity {
  std::array<double, 3> skin;
  std::vector<Band> bands;
  double tex_fu, tex_fv, tex_phase, tex_amp;
};

std::string subject_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%03d", s);
  return buf;
}

Identity make_identity(const SynthSpec& spec, int subject) {
  std::mt19937_64 rng(derive_seed(spec.seed, subject_name(subject)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  std::normal_distribution<double> tilt(0.0, 0.12);

  Identity id;
  id.skin = {uni(0.72, 0.9), uni(0.52, 0.7), uni(0.42, 0.6)};
  const int n = 5 + static_cast<int>(u01(rng) * 4);
  for (int i = 0; i < n; ++i) {
    const bool horizontal = u01(rng) < 0.7;
    const double angle = horizontal ? tilt(rng) : uni(-std::numbers::pi / 2, std::numbers::pi / 2);
    Band b;
    b.cos_a = std::cos(angle);
    b.sin_a = std::sin(angle);
    b.offset = horizontal ? uni(-0.75, 0.75) : uni(-0.9, 0.9);
    b.curvature = uni(-0.3, 0.3);
    b.width = uni(0.025, 0.07);
    b.depth = uni(0.15, 0.45);
    b.lo = uni(-1.5, -0.5);
    b.hi = uni(0.5, 1.5);
    id.bands.push_back(b);
  }
  id.tex_fu = uni(1.0, 4.0);
  id.tex_fv = uni(1.0, 4.0);
  id.tex_phase = uni(0.0, 2 * std::numbers::pi);
  id.tex_amp = uni(0.02, 0.06);
  return id;
}

double smooth_edge(double x) {
  const double t = std::clamp(x, 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// Shading factor of the identity pattern at normalized coordinates (u, v).
double shade(const Identity& id, double u, double v) {
  double dark = 0.0;
  for (const auto& b : id.bands) {
    const double along = b.cos_a * u + b.sin_a * v;
    const double across = -b.sin_a * u + b.cos_a * v - b.offset - b.curvature * along * along;
    const double envelope = smooth_edge((along - b.lo) / 0.15) * smooth_edge((b.hi - along) / 0.15);
    dark += b.depth * std::exp(-across * across / (2 * b.width * b.width)) * envelope;
  }
  const double texture = 1.0 + id.tex_amp * std::sin(2 * std::numbers::pi * (id.tex_fu * u + id.tex_fv * v) + id.tex_phase);
  return std::max(0.2, 1.0 - dark) * texture;
}

}  // namespace

RoiImage render_synthetic(const SynthSpec& spec, int subject, int index) {
  spec.validate();
  const Identity id = make_identity(spec, subject);
  std::mt19937_64 rng(derive_seed(spec.seed, subject_name(subject) + "/" + std::to_string(index)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 6> waves{};  // three for each displacement axis
  for (auto& w : waves) {
    w.fx = (u01(rng) * 2 - 1) * 1.5 * 2 * std::numbers::pi / spec.image_width;
    w.fy = (u01(rng) * 2 - 1) * 1.5 * 2 * std::numbers::pi / spec.image_height;
    w.phase = u01(rng) * 2 * std::numbers::pi;
    w.amp = spec.warp_amplitude * (0.5 + 0.5 * u01(rng)) / std::sqrt(3.0);
  }
  const double brightness = 1.0 + spec.brightness_range * (u01(rng) * 2 - 1);

  RoiImage img(spec.image_height, spec.image_width);
  img.source_id = subject_name(subject) + "/" + std::to_string(index);
  const double half_h = spec.image_height / 2.0;
  const double half_w = spec.image_width / 2.0;
  for (int y = 0; y < spec.image_height; ++y) {
    for (int x = 0; x < spec.image_width; ++x) {
      double dx = 0.0, dy = 0.0;
      for (int k = 0; k < 3; ++k) {
        dx += waves[k].amp * std::sin(waves[k].fx * x + waves[k].fy * y + waves[k].phase);
        dy += waves[k + 3].amp * std::sin(waves[k + 3].fx * x + waves[k + 3].fy * y + waves[k + 3].phase);
      }
      const double u = (x + dx - half_w) / half_h;
      const double v = (y + dy - half_h) / half_h;
      const double s = shade(id, u, v) * brightness;
      for (int c = 0; c < 3; ++c) {
        const double noise = spec.noise_sigma > 0 ? spec.noise_sigma * gauss(rng) : 0.0;
        img(y, x, c) = static_cast<float>(std::clamp(id.skin[c] * s + noise, 0.0, 1.0));
      }
    }
  }
  return img;
}

DatasetManifest generate_synthetic(const SynthSpec& spec, const fs::path& out) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(Errc::IoFailure, "cannot create " + out.string() + ": " + ec.message());

  DatasetManifest m;
  m.root = fs::absolute(out);
  m.metadata = {{"generator", "synthetic-forehead"}, {"synth", to_json(spec)}, {"normalization", "divide-255"}};
  const int per_session = (spec.samples_per_subject + spec.sessions - 1) / spec.sessions;
  for (int s = 0; s < spec.num_subjects; ++s) {
    SubjectEntry subject;
    subject.subject_id = subject_name(s);
    for (int i = 0; i < spec.samples_per_subject; ++i) {
      const int session = i / per_session;
      const std::string session_id = "sess" + std::to_string(session + 1);
      if (subject.sessions.empty() || subject.sessions.back().session_id != session_id)
        subject.sessions.push_back({session_id, {}});
      char name[32];
      std::snprintf(name, sizeof(name), "img%02d.png", i);
      const fs::path rel = fs::path(subject.subject_id) / session_id / name;
      fs::create_directories(m.root / rel.parent_path(), ec);
      if (ec) fail(Errc::IoFailure, "cannot create " + (m.root / rel.parent_path()).string());
      write_png(m.root / rel, render_synthetic(spec, s, i));
      subject.sessions.back().files.push_back(rel.generic_string());
    }
    m.subjects.push_back(std::move(subject));
  }
  write_manifest_index(m, m.root / kManifestIndexName);
  return m;
}

}  // namespace fhsst
