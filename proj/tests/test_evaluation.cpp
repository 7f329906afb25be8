#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fhsst/errors.hpp"
#include "fhsst/evaluation.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace fhsst;
namespace fs = std::filesystem;

namespace {

DatasetManifest tree(int subjects, int sessions, int per_session) {
  DatasetManifest m;
  for (int s = 0; s < subjects; ++s) {
    SubjectEntry e{"s" + std::to_string(1000 + s), {}};
    for (int k = 0; k < sessions; ++k) {
      SessionEntry sess{"sess" + std::to_string(k + 1), {}};
      for (int i = 0; i < per_session; ++i) sess.files.push_back(e.subject_id + "/" + sess.session_id + "/img" + std::to_string(10 + i) + ".cube");
      e.sessions.push_back(sess);
    }
    m.subjects.push_back(e);
  }
  return m;
}

ScoreSet gaussian_scores(std::size_t ng, std::size_t ni, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.7, 0.15), i(0.3, 0.15);
  ScoreSet s;
  for (std::size_t k = 0; k < ng; ++k) s.genuine.push_back(g(rng));
  for (std::size_t k = 0; k < ni; ++k) s.impostor.push_back(i(rng));
  return s;
}

}  // namespace

TEST_CASE("split plans") {
  SUBCASE("247 subjects with 20 images") {
    const SplitPlan plan = make_split(tree(247, 2, 10), {});
    CHECK(plan.gallery_count() == 2470);
    CHECK(plan.probe_count() == 2470);
    CHECK(plan.reductions.empty());
    for (const auto& s : plan.subjects) {
      for (const auto& g : s.gallery) CHECK(g.find("/sess1/") != std::string::npos);
      for (const auto& p : s.probe) CHECK(p.find("/sess2/") != std::string::npos);
    }
  }
  SUBCASE("one subject with two images") {
    SplitOptions opt{1, 1, SplitPolicy::Random, 3};
    const SplitPlan plan = make_split(tree(1, 1, 2), opt);
    REQUIRE(plan.subjects.size() == 1);
    CHECK(plan.subjects[0].gallery.size() == 1);
    CHECK(plan.subjects[0].probe.size() == 1);
    CHECK(plan.subjects[0].gallery[0] != plan.subjects[0].probe[0]);
  }
  SUBCASE("deterministic and disjoint under the random policy") {
    SplitOptions opt{4, 4, SplitPolicy::Random, 42};
    const SplitPlan a = make_split(tree(9, 2, 5), opt);
    const SplitPlan b = make_split(tree(9, 2, 5), opt);
    for (std::size_t i = 0; i < a.subjects.size(); ++i) {
      CHECK(a.subjects[i].gallery == b.subjects[i].gallery);
      CHECK(a.subjects[i].probe == b.subjects[i].probe);
      std::set<std::string> g(a.subjects[i].gallery.begin(), a.subjects[i].gallery.end());
      for (const auto& p : a.subjects[i].probe) CHECK(g.count(p) == 0);
    }
  }
  SUBCASE("short subjects are reduced and recorded") {
    const SplitPlan plan = make_split(tree(3, 2, 3), {});
    CHECK(plan.reductions.size() == 3);
    CHECK(plan.gallery_count() == 9);
    CHECK(plan.probe_count() == 9);
  }
  SUBCASE("a subject with one sample is an error") {
    try {
      make_split(tree(2, 1, 1), {});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InsufficientSamples);
    }
  }
}

TEST_CASE("protocol counts") {
  const PairCounts big = count_pairs(make_split(tree(247, 2, 10), {}));
  CHECK(big.genuine == 24700);
  CHECK(big.impostor == 6076200);
  for (int n = 1; n <= 6; ++n)
    for (int g = 1; g <= 3; ++g)
      for (int p = 1; p <= 3; ++p) {
        const PairCounts c = count_pairs(make_split(tree(n, 2, 3), {g, p, SplitPolicy::Session, 0}));
        CHECK(c.genuine == std::uint64_t(n * g * p));
        CHECK(c.impostor == std::uint64_t(n * (n - 1) * g * p));
      }
}

TEST_CASE("score protocol") {
  const SplitPlan plan = make_split(tree(5, 2, 2), {2, 2, SplitPolicy::Session, 0});
  EmbeddingTable emb;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (const auto& s : plan.subjects) {
    for (const auto& id : s.gallery) emb[id] = Vector<double>::NullaryExpr(4, [&] { return n(rng); });
    for (const auto& id : s.probe) emb[id] = Vector<double>::NullaryExpr(4, [&] { return n(rng); });
  }
  const ScoreSet scores = score_protocol(emb, plan, true);
  CHECK(scores.genuine.size() == 20);
  CHECK(scores.impostor.size() == 80);
  CHECK(scores.pairs.size() == 100);
  for (const auto& p : scores.pairs) {
    const Vector<double>& a = emb.at(p.gallery_id);
    const Vector<double>& b = emb.at(p.probe_id);
    CHECK(std::abs(p.score - a.dot(b) / (a.norm() * b.norm())) < 1e-12);
    CHECK(p.genuine == (p.gallery_id.substr(0, 5) == p.probe_id.substr(0, 5)));
  }
  // Scale invariance of the whole protocol.
  EmbeddingTable scaled = emb;
  double k = 0.5;
  for (auto& [id, v] : scaled) v *= (k += 0.75);
  const ScoreSet again = score_protocol(scaled, plan);
  for (std::size_t i = 0; i < scores.genuine.size(); ++i) CHECK(std::abs(again.genuine[i] - scores.genuine[i]) < 1e-12);
  for (std::size_t i = 0; i < scores.impostor.size(); ++i) CHECK(std::abs(again.impostor[i] - scores.impostor[i]) < 1e-12);

  emb.erase(plan.subjects[2].probe[0]);
  try {
    score_protocol(emb, plan);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingEmbedding);
  }

  const SplitPlan two = make_split(tree(2, 2, 1), {1, 1, SplitPolicy::Session, 0});
  EmbeddingTable e2;
  for (const auto& s : two.subjects) {
    e2[s.gallery[0]] = Vector<double>::Ones(3);
    e2[s.probe[0]] = Vector<double>::Ones(3);
  }
  const ScoreSet s2 = score_protocol(e2, two);
  CHECK(s2.genuine.size() == 2);
  CHECK(s2.impostor.size() == 2);
}

TEST_CASE("DET curve examples") {
  SUBCASE("separated sets") {
    const ScoreSet s{{0.9, 0.8}, {0.1, 0.2}, {}};
    const DetCurve c = det_curve(s);
    bool found = false;
    for (const auto& p : c.points)
      if (p.fmr == 0 && p.fnmr == 0) found = true;
    CHECK(found);
    const oracle::Rates r = oracle::rates_at(s.genuine, s.impostor, 0.5);
    CHECK(r.fmr == 0);
    CHECK(r.fnmr == 0);
    CHECK(eer(c) == 0.0);
    CHECK(tmr_at_fmr(c, 1e-3).tmr == 1.0);
    CHECK(tmr_at_fmr(c, 0.5).tmr == 1.0);
  }
  SUBCASE("degenerate overlap") {
    const ScoreSet s{{0.5}, {0.5}, {}};
    const DetCurve c = det_curve(s);
    REQUIRE(c.points.size() == 3);
    CHECK(c.points[1].threshold == 0.5);
    CHECK(c.points[1].fmr == 1.0);
    CHECK(c.points[1].fnmr == 0.0);
    CHECK(c.points[2].fmr == 0.0);
    CHECK(c.points[2].fnmr == 1.0);
  }
  SUBCASE("identical distributions give 0.5") {
    std::vector<double> v = {0.1, 0.4, 0.4, 0.7, 0.9};
    CHECK(eer(det_curve(ScoreSet{v, v, {}})) == doctest::Approx(0.5));
  }
  SUBCASE("loosest operating point") {
    const ScoreSet s{{0.3, 0.6}, {0.1, 0.2, 0.5, 0.8}, {}};
    const OperatingPoint op = tmr_at_fmr(det_curve(s), 1.0 - 1e-9);
    CHECK(op.reachable);
    // Threshold 0.1 accepts every impostor; 0.2 is the first point below the target.
    CHECK(op.threshold == 0.2);
    CHECK(op.fmr == 0.75);
    CHECK(op.tmr == 1.0);
  }
  SUBCASE("errors") {
    try {
      det_curve(ScoreSet{{}, {0.1}, {}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyScores);
    }
    CHECK_THROWS_AS(tmr_at_fmr(det_curve(ScoreSet{{0.2}, {0.1}, {}}), 0.0), Error);
  }
}

TEST_CASE("DET curve equals the brute-force sweep") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  ScoreSet s;
  for (int i = 0; i < 1000; ++i) {
    s.genuine.push_back(std::round(u(rng) * 200) / 200);  // rounded to force ties
    s.impostor.push_back(std::round(u(rng) * 200) / 200);
  }
  const DetCurve c = det_curve(s);
  const auto ts = oracle::thresholds(s.genuine, s.impostor);
  REQUIRE(c.points.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const oracle::Rates r = oracle::rates_at(s.genuine, s.impostor, ts[i]);
    CHECK(c.points[i].threshold == ts[i]);
    CHECK(c.points[i].fmr == r.fmr);
    CHECK(c.points[i].fnmr == r.fnmr);
    if (i > 0) {
      CHECK(c.points[i].fmr <= c.points[i - 1].fmr);
      CHECK(c.points[i].fnmr >= c.points[i - 1].fnmr);
    }
  }
  CHECK(c.points.front().fmr == 1.0);
  CHECK(c.points.back().fmr == 0.0);
}

TEST_CASE("EER and TMR on a Gaussian mixture match the oracle") {
  std::mt19937_64 rng(2718);
  const ScoreSet s = gaussian_scores(5000, 5000, rng);
  const DetCurve c = det_curve(s);
  CHECK(std::abs(eer(c) - oracle::eer(s.genuine, s.impostor)) < 1e-9);
  for (double t : {1e-3, 1e-4})
    CHECK(std::abs(tmr_at_fmr(c, t).tmr - oracle::tmr_at(s.genuine, s.impostor, t)) < 1e-9);
}

TEST_CASE("score and report files") {
  const fs::path dir = fs::temp_directory_path() / "fhsst_test_eval";
  fs::create_directories(dir);
  ScoreSet s;
  s.pairs = {{"a/1/x", "a/2/y", true, 0.91}, {"a/1/x", "b/2/z", false, -0.125}, {"b/1/w", "b/2/z", true, 0.5}};
  for (const auto& p : s.pairs) (p.genuine ? s.genuine : s.impostor).push_back(p.score);
  write_scores_csv(dir / "scores.csv", s);
  const ScoreSet back = read_scores_csv(dir / "scores.csv");
  CHECK(back.genuine == s.genuine);
  CHECK(back.impostor == s.impostor);
  write_det_csv(dir / "det.csv", det_curve(s));
  std::ifstream det(dir / "det.csv");
  std::string header;
  std::getline(det, header);
  CHECK(header == "threshold,fmr,fnmr");
  const MetricsReport r = compute_metrics(s);
  write_report(dir / "metrics.json", r);
  const std::string text = format_report(r);
  CHECK(text.find("EER") != std::string::npos);
  fs::remove_all(dir);
}
