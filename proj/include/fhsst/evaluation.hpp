#pragma once

#include "fhsst/datakit.hpp"
#include "fhsst/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fhsst {

/// Per-subject gallery and probe sample ids (disjoint within a subject).
struct SubjectSplit {
  std::string subject_id;
  std::vector<std::string> gallery;
  std::vector<std::string> probe;
};

struct SplitPlan {
  std::vector<SubjectSplit> subjects;
  std::vector<std::string> reductions;  // subjects whose counts were reduced

  std::size_t gallery_count() const;
  std::size_t probe_count() const;
};

enum class SplitPolicy { Session, Random };

std::string to_string(SplitPolicy p);
SplitPolicy split_policy_from(const std::string& s);

struct SplitOptions {
  int gallery_per_subject = 10;
  int probe_per_subject = 10;
  SplitPolicy policy = SplitPolicy::Session;
  std::uint64_t seed = 0;
};

/// Session policy: gallery drawn from the first session and probe from the
/// second (subjects with one session fall back to a random split). Random
/// policy: a seeded shuffle of all samples, gallery first. A subject with
/// fewer than g + p samples (but at least two) is reduced proportionally and
/// listed in `reductions`; fewer than two throws InsufficientSamples.
SplitPlan make_split(const DatasetManifest& manifest, const SplitOptions& opt);

struct PairCounts {
  std::uint64_t genuine = 0;
  std::uint64_t impostor = 0;
};

/// Visits every gallery x probe pair: same-subject pairs are genuine, all
/// ordered cross-subject pairs are impostor.
void for_each_pair(const SplitPlan& split,
                   const std::function<void(const std::string& gallery, const std::string& probe, bool genuine)>& fn);

/// Pair counts without materializing scores.
PairCounts count_pairs(const SplitPlan& split);

struct ScorePair {
  std::string gallery_id;
  std::string probe_id;
  bool genuine = false;
  double score = 0.0;
};

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
  std::vector<ScorePair> pairs;  // optional per-pair records, in protocol order
};

using EmbeddingTable = std::map<std::string, Vector<double>>;

/// Cosine similarity for every protocol pair. Throws MissingEmbedding when a
/// split sample has no embedding.
ScoreSet score_protocol(const EmbeddingTable& embeddings, const SplitPlan& split, bool keep_pairs = false);

struct DetPoint {
  double threshold = 0.0;
  double fmr = 0.0;
  double fnmr = 0.0;
};

/// Points ordered by increasing threshold: -inf, every distinct observed
/// score, +inf. Accept iff score >= threshold, so FMR(t) is the fraction of
/// impostor scores >= t and FNMR(t) the fraction of genuine scores < t.
struct DetCurve {
  std::vector<DetPoint> points;
};

DetCurve det_curve(const ScoreSet& scores);

/// Error rate where FMR - FNMR changes sign, interpolated linearly between
/// the two bracketing points.
double eer(const DetCurve& curve);

struct OperatingPoint {
  double tmr = 0.0;
  double fmr = 0.0;
  double threshold = 0.0;
  bool reachable = false;
};

/// 1 - FNMR at the smallest threshold whose FMR <= target (no
/// interpolation). `reachable` is false when no point meets the target.
OperatingPoint tmr_at_fmr(const DetCurve& curve, double target_fmr);

struct MetricsReport {
  std::size_t genuine_count = 0;
  std::size_t impostor_count = 0;
  double eer = 0.0;
  OperatingPoint at_fmr_1e3;
  OperatingPoint at_fmr_1e4;
};

MetricsReport compute_metrics(const ScoreSet& scores);

// File formats.
void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores);  // pair_type,gallery_id,probe_id,score
ScoreSet read_scores_csv(const std::filesystem::path& path);
void write_det_csv(const std::filesystem::path& path, const DetCurve& curve);  // threshold,fmr,fnmr
std::string format_report(const MetricsReport& report);
void write_report(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace fhsst
