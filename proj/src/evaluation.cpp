#include "fhsst/evaluation.hpp"

#include "fhsst/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace fhsst {

std::size_t SplitPlan::gallery_count() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.gallery.size();
  return n;
}

std::size_t SplitPlan::probe_count() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.probe.size();
  return n;
}

std::string to_string(SplitPolicy p) { return p == SplitPolicy::Session ? "session" : "random"; }

SplitPolicy split_policy_from(const std::string& s) {
  if (s == "session") return SplitPolicy::Session;
  if (s == "random") return SplitPolicy::Random;
  fail(Errc::InvalidConfig, "unknown split policy '" + s + "' (expected session|random)");
}

SplitPlan make_split(const DatasetManifest& manifest, const SplitOptions& opt) {
  if (opt.gallery_per_subject < 1 || opt.probe_per_subject < 1)
    fail(Errc::InvalidConfig, "gallery and probe counts must be >= 1");
  SplitPlan plan;
  for (const auto& subject : manifest.subjects) {
    std::vector<std::vector<std::string>> by_session;
    std::vector<std::string> all;
    for (const auto& session : subject.sessions) {
      by_session.emplace_back();
      for (const auto& file : session.files) {
        by_session.back().push_back(sample_id_for(subject.subject_id, session.session_id, file));
        all.push_back(by_session.back().back());
      }
    }
    const int n = static_cast<int>(all.size());
    if (n < 2)
      fail(Errc::InsufficientSamples, subject.subject_id + " has " + std::to_string(n) + " sample(s); need at least 2");

    int g = opt.gallery_per_subject;
    int p = opt.probe_per_subject;
    if (n < g + p) {
      g = std::clamp(static_cast<int>(std::lround(double(n) * g / (g + p))), 1, n - 1);
      p = std::min(p, n - g);
    }

    std::mt19937_64 rng(derive_seed(opt.seed, subject.subject_id));
    SubjectSplit split{subject.subject_id, {}, {}};
    if (opt.policy == SplitPolicy::Session && by_session.size() >= 2) {
      auto first = by_session[0];
      auto second = by_session[1];
      std::shuffle(first.begin(), first.end(), rng);
      std::shuffle(second.begin(), second.end(), rng);
      g = std::min<int>(g, static_cast<int>(first.size()));
      p = std::min<int>(p, static_cast<int>(second.size()));
      split.gallery.assign(first.begin(), first.begin() + g);
      split.probe.assign(second.begin(), second.begin() + p);
    } else {
      std::shuffle(all.begin(), all.end(), rng);
      split.gallery.assign(all.begin(), all.begin() + g);
      split.probe.assign(all.begin() + g, all.begin() + g + p);
    }
    std::sort(split.gallery.begin(), split.gallery.end());
    std::sort(split.probe.begin(), split.probe.end());
    if (g != opt.gallery_per_subject || p != opt.probe_per_subject)
      plan.reductions.push_back(subject.subject_id + ": " + std::to_string(g) + " gallery / " + std::to_string(p) +
                                " probe");
    plan.subjects.push_back(std::move(split));
  }
  return plan;
}

void for_each_pair(const SplitPlan& split,
                   const std::function<void(const std::string&, const std::string&, bool)>& fn) {
  for (std::size_t a = 0; a < split.subjects.size(); ++a)
    for (const auto& g : split.subjects[a].gallery)
      for (std::size_t b = 0; b < split.subjects.size(); ++b)
        for (const auto& p : split.subjects[b].probe) fn(g, p, a == b);
}

PairCounts count_pairs(const SplitPlan& split) {
  PairCounts c;
  for_each_pair(split, [&](const std::string&, const std::string&, bool genuine) {
    if (genuine)
      ++c.genuine;
    else
      ++c.impostor;
  });
  return c;
}

ScoreSet score_protocol(const EmbeddingTable& embeddings, const SplitPlan& split, bool keep_pairs) {
  std::map<std::string, Vector<double>> unit;
  auto fetch = [&](const std::string& id) -> const Vector<double>& {
    auto it = unit.find(id);
    if (it != unit.end()) return it->second;
    auto src = embeddings.find(id);
    if (src == embeddings.end()) fail(Errc::MissingEmbedding, "no embedding for " + id);
    const double n = src->second.norm();
    if (!(n > 0)) fail(Errc::DegenerateEmbedding, "zero-norm embedding for " + id);
    return unit.emplace(id, src->second / n).first->second;
  };
  for (const auto& s : split.subjects) {
    for (const auto& id : s.gallery) fetch(id);
    for (const auto& id : s.probe) fetch(id);
  }

  ScoreSet out;
  const auto counts = count_pairs(split);
  out.genuine.reserve(counts.genuine);
  out.impostor.reserve(counts.impostor);
  for_each_pair(split, [&](const std::string& g, const std::string& p, bool genuine) {
    const double score = std::clamp(unit.at(g).dot(unit.at(p)), -1.0, 1.0);
    (genuine ? out.genuine : out.impostor).push_back(score);
    if (keep_pairs) out.pairs.push_back({g, p, genuine, score});
  });
  return out;
}

DetCurve det_curve(const ScoreSet& scores) {
  if (scores.genuine.empty() || scores.impostor.empty()) fail(Errc::EmptyScores, "need genuine and impostor scores");
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  const double ng = static_cast<double>(gen.size());
  const double ni = static_cast<double>(imp.size());
  constexpr double inf = std::numeric_limits<double>::infinity();

  DetCurve curve;
  curve.points.push_back({-inf, 1.0, 0.0});
  std::size_t gi = 0;  // genuine scores < t
  std::size_t ii = 0;  // impostor scores < t
  while (gi < gen.size() || ii < imp.size()) {
    const double t = std::min(gi < gen.size() ? gen[gi] : inf, ii < imp.size() ? imp[ii] : inf);
    curve.points.push_back({t, (ni - static_cast<double>(ii)) / ni, static_cast<double>(gi) / ng});
    while (gi < gen.size() && gen[gi] == t) ++gi;
    while (ii < imp.size() && imp[ii] == t) ++ii;
  }
  curve.points.push_back({inf, 0.0, 1.0});
  return curve;
}

double eer(const DetCurve& curve) {
  const auto& pts = curve.points;
  if (pts.empty()) fail(Errc::EmptyScores, "empty DET curve");
  double prev_diff = pts.front().fmr - pts.front().fnmr;
  if (prev_diff <= 0) return (pts.front().fmr + pts.front().fnmr) / 2;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double diff = pts[i].fmr - pts[i].fnmr;
    if (diff <= 0) {
      const double alpha = prev_diff / (prev_diff - diff);
      const double fmr = pts[i - 1].fmr + alpha * (pts[i].fmr - pts[i - 1].fmr);
      const double fnmr = pts[i - 1].fnmr + alpha * (pts[i].fnmr - pts[i - 1].fnmr);
      return (fmr + fnmr) / 2;
    }
    prev_diff = diff;
  }
  const auto& last = pts.back();
  return (last.fmr + last.fnmr) / 2;
}

OperatingPoint tmr_at_fmr(const DetCurve& curve, double target_fmr) {
  if (!(target_fmr > 0.0 && target_fmr < 1.0)) fail(Errc::InvalidConfig, "target FMR must lie in (0, 1)");
  for (const auto& pt : curve.points)
    if (pt.fmr <= target_fmr) return {1.0 - pt.fnmr, pt.fmr, pt.threshold, true};
  OperatingPoint none;
  none.threshold = std::numeric_limits<double>::quiet_NaN();
  return none;
}

MetricsReport compute_metrics(const ScoreSet& scores) {
  const DetCurve curve = det_curve(scores);
  MetricsReport r;
  r.genuine_count = scores.genuine.size();
  r.impostor_count = scores.impostor.size();
  r.eer = eer(curve);
  r.at_fmr_1e3 = tmr_at_fmr(curve, 1e-3);
  r.at_fmr_1e4 = tmr_at_fmr(curve, 1e-4);
  return r;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out << "pair_type,gallery_id,probe_id,score\n" << std::setprecision(17);
  if (!scores.pairs.empty()) {
    for (const auto& p : scores.pairs)
      out << (p.genuine ? "genuine" : "impostor") << ',' << p.gallery_id << ',' << p.probe_id << ',' << p.score << '\n';
  } else {
    for (double s : scores.genuine) out << "genuine,,," << s << '\n';
    for (double s : scores.impostor) out << "impostor,,," << s << '\n';
  }
  if (!out) fail(Errc::IoFailure, "short write to " + path.string());
}

ScoreSet read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("pair_type,gallery_id,probe_id,score", 0) != 0)
    fail(Errc::InvalidConfig, path.string() + ": expected header pair_type,gallery_id,probe_id,score");
  ScoreSet out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 4) fail(Errc::InvalidConfig, path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
    double score = 0;
    try {
      score = std::stod(cols[3]);
    } catch (const std::exception&) {
      fail(Errc::InvalidConfig, path.string() + ":" + std::to_string(lineno) + ": bad score '" + cols[3] + "'");
    }
    bool genuine = false;
    if (cols[0] == "genuine")
      genuine = true;
    else if (cols[0] != "impostor")
      fail(Errc::InvalidConfig, path.string() + ":" + std::to_string(lineno) + ": pair_type must be genuine|impostor");
    (genuine ? out.genuine : out.impostor).push_back(score);
    out.pairs.push_back({cols[1], cols[2], genuine, score});
  }
  return out;
}

void write_det_csv(const std::filesystem::path& path, const DetCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out << "threshold,fmr,fnmr\n" << std::setprecision(17);
  for (const auto& p : curve.points) out << p.threshold << ',' << p.fmr << ',' << p.fnmr << '\n';
}

namespace {

nlohmann::json op_json(const OperatingPoint& op) {
  return {{"tmr", op.tmr},
          {"fmr", op.fmr},
          {"threshold", std::isfinite(op.threshold) ? nlohmann::json(op.threshold)
                                                    : nlohmann::json(op.threshold > 0 ? "inf" : "-inf")},
          {"reachable", op.reachable}};
}

}  // namespace

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "genuine pairs      " << r.genuine_count << '\n';
  os << "impostor pairs     " << r.impostor_count << '\n';
  os << "EER (%)            " << 100 * r.eer << '\n';
  os << "TMR (%) @FMR 0.1%  " << 100 * r.at_fmr_1e3.tmr << (r.at_fmr_1e3.reachable ? "" : " (unreachable)") << '\n';
  os << "TMR (%) @FMR 0.01% " << 100 * r.at_fmr_1e4.tmr << (r.at_fmr_1e4.reachable ? "" : " (unreachable)") << '\n';
  return os.str();
}

void write_report(const std::filesystem::path& path, const MetricsReport& r) {
  const nlohmann::json j = {{"genuine_pairs", r.genuine_count},
                            {"impostor_pairs", r.impostor_count},
                            {"eer", r.eer},
                            {"tmr_at_fmr_0.001", op_json(r.at_fmr_1e3)},
                            {"tmr_at_fmr_0.0001", op_json(r.at_fmr_1e4)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fhsst
