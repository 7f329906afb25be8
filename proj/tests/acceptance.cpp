// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Pass criterion numbers to run a subset, e.g. `acceptance 1 7`.

#include "fhsst/backbone.hpp"
#include "fhsst/checkpoint.hpp"
#include "fhsst/errors.hpp"
#include "fhsst/evaluation.hpp"
#include "fhsst/hash.hpp"
#include "fhsst/head.hpp"
#include "fhsst/losses.hpp"
#include "fhsst/montage.hpp"
#include "fhsst/run_config.hpp"
#include "fhsst/training.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

using namespace fhsst;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename S>
Tensor4<S> random_tensor(const Shape4& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor4<S> t(s);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = S(u(rng));
  return t;
}

RowMatrix<double> gaussian_rows(int n, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  RowMatrix<double> m(n, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// 1. Block shapes and embedding sizes of the full-size model.
Outcome shape_contract() {
  const auto t0 = std::chrono::steady_clock::now();
  const Backbone<float> net(full_backbone({80, 224, 224, 3}));
  const ParamSet<float> params = net.init_params(1);
  std::mt19937_64 rng(1);
  const Tensor4<float> x = random_tensor<float>({80, 224, 224, 3}, rng);
  std::vector<Shape4> shapes;
  const Vector<float> emb = net.forward(x, params, nullptr, &shapes);
  const std::vector<Shape4> want = {{40, 56, 56, 64}, {40, 28, 28, 162}, {40, 14, 14, 480}, {20, 7, 7, 832}, {10, 4, 4, 1024}};
  const Head<float> head(HeadConfig{1024, 1024, 512});
  const Vector<float> out = head.forward(emb, head.init_params(2));
  const double secs = seconds_since(t0);
  std::string observed;
  for (const auto& s : shapes) observed += to_string(s) + " ";
  const bool ok = shapes == want && emb.size() == 1024 && out.size() == 512 && std::abs(out.norm() - 1.0f) < 1e-5f &&
                  secs < 120;
  return {ok, "blocks " + observed + "embedding " + std::to_string(emb.size()) + ", head " +
                  std::to_string(out.size()) + " |f|=" + fmt(out.norm(), 7) + ", " + fmt(secs, 3) + " s"};
}

// 2. Pair counts of the 247-subject protocol.
Outcome protocol_counts() {
  DatasetManifest m;
  for (int s = 0; s < 247; ++s) {
    SubjectEntry subj{"subject" + std::to_string(s), {}};
    for (int k = 0; k < 2; ++k) {
      SessionEntry sess{"session" + std::to_string(k), {}};
      for (int i = 0; i < 10; ++i) sess.files.push_back(subj.subject_id + "/" + sess.session_id + "/" + std::to_string(i) + ".png");
      subj.sessions.push_back(sess);
    }
    m.subjects.push_back(subj);
  }
  const SplitPlan split = make_split(m, SplitOptions{10, 10, SplitPolicy::Session, 99});
  const PairCounts c = count_pairs(split);
  return {c.genuine == 24700 && c.impostor == 6076200,
          "genuine " + std::to_string(c.genuine) + ", impostor " + std::to_string(c.impostor)};
}

// 3. EER and TMR@FMR against the brute-force threshold sweep.
Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  int mismatched_reachability = 0;
  for (int set = 0; set < 50; ++set) {
    std::mt19937_64 rng(1000 + set);
    std::uniform_int_distribution<int> size(10, 10000);
    const int ng = size(rng), ni = size(rng);
    std::normal_distribution<double> gen(0.6, 0.15), imp(0.2, 0.15);
    const bool ties = set % 2 == 1;  // odd sets are quantized to force ties
    auto draw = [&](std::normal_distribution<double>& d) {
      const double v = d(rng);
      return ties ? std::round(v * 200) / 200 : v;
    };
    ScoreSet s;
    for (int i = 0; i < ng; ++i) s.genuine.push_back(draw(gen));
    for (int i = 0; i < ni; ++i) s.impostor.push_back(draw(imp));
    const DetCurve curve = det_curve(s);
    worst = std::max(worst, std::abs(eer(curve) - oracle::eer(s.genuine, s.impostor)));
    for (double target : {1e-3, 1e-4}) {
      const OperatingPoint op = tmr_at_fmr(curve, target);
      const double ref = oracle::tmr_at(s.genuine, s.impostor, target);
      if (op.reachable != !std::isnan(ref))
        ++mismatched_reachability;
      else if (op.reachable)
        worst = std::max(worst, std::abs(op.tmr - ref));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && mismatched_reachability == 0 && secs < 300,
          "max |diff| " + fmt(worst) + " over 50 sets, " + fmt(secs, 3) + " s"};
}

// 4. Finite-difference gradient checks in double precision.
Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  const double h = 1e-6;

  // Triplet loss, skipping cases within 1e-4 of a hinge kink.
  double worst_triplet = 0;
  int triplet_cases = 0;
  std::mt19937_64 rng(4);
  while (triplet_cases < 120) {
    RowMatrix<double> e = gaussian_rows(6, 5, rng);
    const std::vector<Triplet> t = {{0, 1, 3}, {1, 0, 4}, {2, 0, 5}, {0, 2, 3}};
    const double margin = 0.5;
    bool near_kink = false;
    for (const auto& tr : t) {
      const double v = cosine_distance<double>(e.row(tr.anchor).transpose(), e.row(tr.positive).transpose()) -
                       cosine_distance<double>(e.row(tr.anchor).transpose(), e.row(tr.negative).transpose()) + margin;
      near_kink |= std::abs(v) < 1e-4;
    }
    if (near_kink) continue;
    ++triplet_cases;
    const auto r = triplet_batch_loss<double>(e, t, margin, 2);
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      RowMatrix<double> up = e, down = e;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double fd = (triplet_batch_loss<double>(up, t, margin, 2).loss - triplet_batch_loss<double>(down, t, margin, 2).loss) / (2 * h);
      worst_triplet = std::max(worst_triplet, rel_error(fd, r.grad.data()[i], 1e-6));
    }
  }

  // ArcFace + cross-entropy with respect to the embedding and the class weights.
  double worst_arc = 0;
  int arc_cases = 0;
  ArcConfig arc;
  arc.num_classes = 5;
  while (arc_cases < 120) {
    Vector<double> e = gaussian_rows(1, 8, rng).row(0).transpose();
    e.normalize();
    const Matrix<double> w = gaussian_rows(8, 5, rng);
    const int target = arc_cases % 5;
    const double c = normalize_columns(w).col(target).dot(e);
    if (std::abs(c - std::cos(std::numbers::pi - arc.margin)) < 1e-3) continue;
    ++arc_cases;
    Vector<double> ge;
    Matrix<double> gw;
    classifier_loss<double>(e, w, target, arc, ClassifierLoss::ArcFace, &ge, &gw);
    auto loss = [&](const Vector<double>& ev, const Matrix<double>& wv) {
      return classifier_loss<double>(ev, wv, target, arc, ClassifierLoss::ArcFace, nullptr, nullptr);
    };
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      Vector<double> up = e, down = e;
      up[i] += h;
      down[i] -= h;
      worst_arc = std::max(worst_arc, rel_error((loss(up, w) - loss(down, w)) / (2 * h), ge[i], 1e-4));
    }
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Matrix<double> up = w, down = w;
      up.data()[i] += h;
      down.data()[i] -= h;
      worst_arc = std::max(worst_arc, rel_error((loss(e, up) - loss(e, down)) / (2 * h), gw.data()[i], 1e-4));
    }
  }

  // Reduced backbone -> head -> ArcFace loss, 1% of backbone and head scalars.
  const Backbone<double> net(reduced_backbone());
  ParamSet<double> bp = net.init_params(8);
  for (auto& t : bp.tensors)
    if (t.value.cols() == 1) t.value = Matrix<double>::Random(t.value.rows(), 1) * 0.1;
  const Head<double> head(HeadConfig{net.embedding_dim(), 128, 64});
  ParamSet<double> hp = head.init_params(9);
  for (auto& t : hp.tensors)
    if (t.value.cols() == 1) t.value = Matrix<double>::Random(t.value.rows(), 1) * 0.1;
  const Matrix<double> w = gaussian_rows(64, 10, rng);
  ArcConfig arc10;
  arc10.num_classes = 10;
  const Tensor4<double> x = random_tensor<double>(net.config().input_shape, rng);
  auto head_loss = [&](const Vector<double>& emb, const ParamSet<double>& p) {
    return classifier_loss<double>(head.forward(emb, p), w, 3, arc10, ClassifierLoss::ArcFace, nullptr, nullptr);
  };

  BackboneTape<double> btape;
  const Vector<double> emb = net.forward(x, bp, &btape);
  HeadTape<double> htape;
  const Vector<double> f = head.forward(emb, hp, &htape);
  Vector<double> d_f;
  classifier_loss<double>(f, w, 3, arc10, ClassifierLoss::ArcFace, &d_f, nullptr);
  ParamSet<double> hg = zeros_like(hp), bg = zeros_like(bp);
  const Vector<double> d_emb = head.backward(htape, d_f, hp, hg);
  net.backward(btape, d_emb, bp, bg);

  auto sample = [&](const ParamSet<double>& p) {
    std::vector<std::pair<std::size_t, Eigen::Index>> all;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (Eigen::Index j = 0; j < p[i].size(); ++j) all.emplace_back(i, j);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::max<std::size_t>(1, all.size() / 100));
    return all;
  };
  double worst_net = 0;
  const auto bsample = sample(bp);
  for (const auto& [i, j] : bsample) {
    const double keep = bp[i].data()[j];
    bp[i].data()[j] = keep + h;
    const double up = head_loss(net.forward(x, bp), hp);
    bp[i].data()[j] = keep - h;
    const double down = head_loss(net.forward(x, bp), hp);
    bp[i].data()[j] = keep;
    worst_net = std::max(worst_net, rel_error((up - down) / (2 * h), bg[i].data()[j], 1e-6));
  }
  const auto hsample = sample(hp);
  for (const auto& [i, j] : hsample) {
    const double keep = hp[i].data()[j];
    hp[i].data()[j] = keep + h;
    const double up = head_loss(emb, hp);
    hp[i].data()[j] = keep - h;
    const double down = head_loss(emb, hp);
    hp[i].data()[j] = keep;
    worst_net = std::max(worst_net, rel_error((up - down) / (2 * h), hg[i].data()[j], 1e-6));
  }

  const double secs = seconds_since(t0);
  return {worst_triplet < 1e-4 && worst_arc < 1e-4 && worst_net < 1e-4 && secs < 600,
          "max rel error: triplet " + fmt(worst_triplet) + " (" + std::to_string(triplet_cases) + " cases), arcface " +
              fmt(worst_arc) + " (" + std::to_string(arc_cases) + " cases), reduced backbone+head " + fmt(worst_net) +
              " (" + std::to_string(bsample.size()) + "+" + std::to_string(hsample.size()) + " params), " +
              fmt(secs, 3) + " s"};
}

// 5. Online mining against exhaustive enumeration.
Outcome mining_oracle() {
  std::mt19937_64 rng(5);
  int mismatches = 0;
  std::size_t triplets = 0;
  for (int batch = 0; batch < 200; ++batch) {
    const int n = std::uniform_int_distribution<int>(2, 32)(rng);
    const int classes = std::uniform_int_distribution<int>(1, 6)(rng);
    const int dim = std::uniform_int_distribution<int>(2, 16)(rng);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = std::uniform_int_distribution<int>(0, classes - 1)(rng);
    const RowMatrix<double> e = gaussian_rows(n, dim, rng);
    TripletConfig cfg;
    cfg.margin = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    cfg.margin_max = 2.0;
    const auto got = mine_triplets<double>(e, labels, cfg);
    const auto want = oracle::all_valid_triplets(e, labels, cfg.margin);
    std::set<std::tuple<int, int, int>> a, b(want.begin(), want.end());
    for (const auto& t : got) a.emplace(t.anchor, t.positive, t.negative);
    mismatches += a != b || got.size() != want.size();
    triplets += want.size();
  }
  return {mismatches == 0,
          std::to_string(200 - mismatches) + "/200 batches equal, " + std::to_string(triplets) + " triplets total"};
}

// 6. Montage determinism, overlap and count laws; paper-stated cube shape.
Outcome montage_laws() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0, 1);
  int failures = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::uniform_int_distribution<int> pd(1, 16), sd(1, 8), nd(1, 6);
    const int p = pd(rng), s = sd(rng), rows = nd(rng), cols = nd(rng);
    const MontageConfig cfg = montage_from_grid("random", p, s, rows, cols);
    RoiImage img(cfg.roi_height, cfg.roi_width);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = u(rng);
    const MontageCube a = build_cube(img, cfg), b = build_cube(img, cfg);
    bool ok = a.data.data == b.data.data && a.data.shape == Shape4{rows * cols, p, p, 3} &&
              patch_grid_dims(cfg.roi_height, cfg.roi_width, p, s) == GridDims{rows, cols};
    for (int r = 0; r < rows && ok; ++r)
      for (int c = 0; c < cols && ok; ++c) {
        const int k = r * cols + c;
        for (int y = 0; y < p && ok; ++y)
          for (int x = 0; x < p && ok; ++x)
            for (int ch = 0; ch < 3; ++ch) ok &= a.data(k, y, x, ch) == img(r * s + y, c * s + x, ch);
        // Horizontal neighbours agree on their shared columns.
        if (c + 1 < cols && s < p)
          for (int y = 0; y < p && ok; ++y)
            for (int x = 0; x + s < p; ++x) ok &= a.data(k, y, x + s, 1) == a.data(k + 1, y, x, 1);
        if (r + 1 < rows && s < p)
          for (int y = 0; y + s < p && ok; ++y)
            for (int x = 0; x < p; ++x) ok &= a.data(k, y + s, x, 2) == a.data(k + cols, y, x, 2);
      }
    failures += !ok;
  }
  RoiImage roi(140, 420);
  for (Eigen::Index i = 0; i < roi.pixels.size(); ++i) roi.pixels.data()[i] = u(rng);
  const MontageConfig stated = montage_preset("paper-stated");
  const MontageCube cube = build_cube(resize_roi(roi, stated), stated);
  const bool shape_ok = cube.data.shape == Shape4{60, 170, 170, 3};
  return {failures == 0 && shape_ok, std::to_string(500 - failures) + "/500 layouts hold, paper-stated cube " +
                                         to_string(cube.data.shape)};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "env -u FHSST_CONFIG '" FHSST_CLI "' " + args + " >> '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

double metric_eer(const fs::path& dir) {
  std::ifstream in(dir / "metrics.json");
  return nlohmann::json::parse(in).at("eer").get<double>();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path kSmokeDir = fs::current_path() / "acceptance_smoke";

// 7. Synthetic end-to-end run through the command-line tool.
Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(kSmokeDir);
  fs::create_directories(kSmokeDir);
  const fs::path log = kSmokeDir / "pipeline.log";
  const std::string cfg = "--config '" FHSST_SOURCE_DIR "/configs/smoke.json' ";
  auto at = [&](const std::string& sub) { return "'" + (kSmokeDir / sub).string() + "'"; };
  const std::vector<std::string> steps = {
      "synth --out " + at("raw"),
      "preprocess --input " + at("raw") + " --out " + at("cubes"),
      "train-backbone --data " + at("cubes") + " --out " + at("stage1"),
      "train-head --data " + at("cubes") + " --backbone " + at("stage1/backbone.ckpt") + " --out " + at("stage2"),
      "embed --data " + at("cubes") + " --backbone " + at("stage1/backbone.ckpt") + " --head " +
          at("stage2/head.ckpt") + " --out " + at("trained"),
      "embed --untrained --data " + at("cubes") + " --out " + at("untrained"),
      "evaluate --embeddings " + at("trained/embeddings.csv") + " --out " + at("eval_trained"),
      "evaluate --embeddings " + at("untrained/embeddings.csv") + " --out " + at("eval_untrained"),
  };
  for (const auto& s : steps)
    if (const int code = run_cli(cfg + s, log); code != 0)
      return {false, "step '" + s.substr(0, s.find(' ')) + "' exited with " + std::to_string(code) + ", see " + log.string()};
  const double trained = metric_eer(kSmokeDir / "eval_trained");
  const double untrained = metric_eer(kSmokeDir / "eval_untrained");
  const double secs = seconds_since(t0);
  return {trained <= 0.15 && trained < untrained && secs < 1200,
          "EER trained " + fmt(100 * trained) + "%, untrained " + fmt(100 * untrained) + "%, " + fmt(secs, 4) + " s"};
}

// 8. Frozen backbone, reproducible histories, checkpoint round trip.
Outcome freeze_and_reproducibility() {
  fixture::TempDir dir("fhsst_acceptance_repro");
  SynthSpec spec;
  spec.num_subjects = 6;
  spec.samples_per_subject = 4;
  spec.image_height = 48;
  spec.image_width = 64;
  const CubeStore store(fixture::make_cube_dataset(dir.path, spec));
  const Backbone<float> net(fixture::small_backbone());
  TrainOptions opt;
  opt.batch = {3, 2, 3};
  opt.optimizer.learning_rate = 1e-3;
  auto stage1 = [&](int epochs) {
    BackboneModel m{&net, net.init_params(1), {}};
    TrainOptions o = opt;
    o.optimizer.max_epochs = epochs;
    TrainState s;
    s.rng_seed = 77;
    s = train_backbone(store, m, o, s);
    return std::make_pair(s, m);
  };
  const auto [short_run, short_model] = stage1(2);
  const auto [long_run, long_model] = stage1(3);
  const bool prefix = std::equal(short_run.loss_history.begin(), short_run.loss_history.end(),
                                 long_run.loss_history.begin()) &&
                      long_run.loss_history.size() > short_run.loss_history.size();

  BackboneModel backbone = long_model;
  const std::string frozen = params_hash(backbone.params);
  const Head<float> hnet(HeadConfig{net.embedding_dim(), 32, 16});
  HeadModel head{&hnet, hnet.init_params(2), {}, init_classifier(16, store.index().num_subjects(), 3), {}};
  TrainOptions ho = opt;
  ho.optimizer.max_epochs = 2;
  ho.arc.num_classes = store.index().num_subjects();
  TrainState hs;
  hs.stage = "head";
  train_head(store, backbone, head, ho, hs);
  bool frozen_ok = params_hash(backbone.params) == frozen;

  // The smoke run's backbone checkpoint must be untouched by its own stage 2.
  const fs::path smoke_ckpt = kSmokeDir / "stage1" / "backbone.ckpt";
  if (fs::exists(smoke_ckpt)) {
    const Checkpoint c = load_checkpoint(smoke_ckpt);
    std::ifstream run(kSmokeDir / "stage2" / "run.json");
    const auto j = nlohmann::json::parse(run);
    frozen_ok &= j.contains("train-head");
    const fs::path again = dir.path / "again.ckpt";
    save_checkpoint(again, c);
    frozen_ok &= file_bytes(again) == file_bytes(smoke_ckpt);
  }

  Checkpoint c = pack_backbone(long_model, long_run, opt);
  save_checkpoint(dir.path / "a.ckpt", c);
  BackboneModel restored{&net, {}, {}};
  TrainState rs;
  unpack_backbone(load_checkpoint(dir.path / "a.ckpt"), restored, rs);
  save_checkpoint(dir.path / "b.ckpt", pack_backbone(restored, rs, opt));
  const bool roundtrip = file_bytes(dir.path / "a.ckpt") == file_bytes(dir.path / "b.ckpt") &&
                         params_hash(restored.params) == params_hash(long_model.params);

  return {prefix && frozen_ok && roundtrip, std::string("backbone hash ") + (frozen_ok ? "unchanged" : "CHANGED") +
                                                " by stage 2, loss-history prefix " + (prefix ? "identical" : "DIFFERS") +
                                                ", checkpoint round trip " + (roundtrip ? "bitwise identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria = {
      {"shape contract", shape_contract},
      {"protocol counts", protocol_counts},
      {"metric oracle equivalence", metric_oracle},
      {"gradient checks", gradient_checks},
      {"mining oracle", mining_oracle},
      {"montage laws", montage_laws},
      {"end-to-end smoke", end_to_end},
      {"freeze and reproducibility", freeze_and_reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
