#include "fhsst/training.hpp"

#include "fhsst/errors.hpp"
#include "fhsst/montage.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

namespace fhsst {

namespace fs = std::filesystem;

void BatchSpec::validate() const {
  if (persons_per_batch < 2) fail(Errc::InvalidConfig, "persons_per_batch must be >= 2");
  if (images_per_person < 2) fail(Errc::InvalidConfig, "images_per_person must be >= 2");
  if (batches_per_epoch < 1) fail(Errc::InvalidConfig, "batches_per_epoch must be >= 1");
}

void OptimizerSpec::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail(Errc::InvalidConfig, "learning_rate must be finite and non-negative");
  if (max_epochs < 0) fail(Errc::InvalidConfig, "max_epochs must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    fail(Errc::InvalidConfig, "moment decays must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail(Errc::InvalidConfig, "epsilon must be positive");
}

std::string to_string(MarginSchedule s) { return s == MarginSchedule::Constant ? "constant" : "linear-ramp"; }

MarginSchedule margin_schedule_from(const std::string& s) {
  if (s == "constant") return MarginSchedule::Constant;
  if (s == "linear-ramp") return MarginSchedule::LinearRamp;
  fail(Errc::InvalidConfig, "unknown margin schedule '" + s + "' (constant | linear-ramp)");
}

double margin_for_epoch(const TripletConfig& cfg, MarginSchedule schedule, int epoch, int max_epochs) {
  if (schedule == MarginSchedule::Constant || max_epochs <= 1) return cfg.margin;
  const double f = std::clamp(static_cast<double>(epoch) / (max_epochs - 1), 0.0, 1.0);
  return cfg.margin + f * (cfg.margin_max - cfg.margin);
}

nlohmann::json to_json(const TrainState& s) {
  return {{"stage", s.stage},
          {"epoch", s.epoch},
          {"step", s.step},
          {"rng_seed", s.rng_seed},
          {"loss_history", s.loss_history},
          {"epoch_losses", s.epoch_losses}};
}

TrainState train_state_from_json(const nlohmann::json& j) {
  TrainState s;
  s.stage = j.at("stage").get<std::string>();
  s.epoch = j.at("epoch").get<int>();
  s.step = j.at("step").get<std::int64_t>();
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s.loss_history = j.at("loss_history").get<std::vector<double>>();
  s.epoch_losses = j.value("epoch_losses", std::vector<double>{});
  return s;
}

// ---------------------------------------------------------------------------

SubjectIndex::SubjectIndex(const DatasetManifest& manifest) {
  int sample = 0;
  for (std::size_t s = 0; s < manifest.subjects.size(); ++s) {
    auto& list = by_subject.emplace_back();
    for (const auto& session : manifest.subjects[s].sessions)
      for (std::size_t f = 0; f < session.files.size(); ++f) {
        list.push_back(sample++);
        labels.push_back(static_cast<int>(s));
      }
  }
}

SampledBatch sample_batch(const SubjectIndex& index, const BatchSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = index.num_subjects();
  if (n < spec.persons_per_batch)
    fail(Errc::InsufficientSubjects, "batch needs " + std::to_string(spec.persons_per_batch) +
                                         " subjects, manifest has " + std::to_string(n));
  std::mt19937_64 rng(seed);
  std::vector<int> subjects(static_cast<std::size_t>(n));
  std::iota(subjects.begin(), subjects.end(), 0);
  // Partial Fisher-Yates: the first Pn entries are a uniform draw without replacement.
  for (int i = 0; i < spec.persons_per_batch; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(subjects[i], subjects[pick(rng)]);
  }

  SampledBatch batch;
  const auto k = static_cast<std::size_t>(spec.images_per_person);
  for (int i = 0; i < spec.persons_per_batch; ++i) {
    const int subject = subjects[i];
    std::vector<int> pool = index.by_subject[subject];
    if (pool.empty()) fail(Errc::InsufficientSamples, "subject " + std::to_string(subject) + " has no samples");
    if (pool.size() >= k) {
      for (std::size_t j = 0; j < k; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
        std::swap(pool[j], pool[pick(rng)]);
        batch.items.push_back(pool[j]);
        batch.labels.push_back(subject);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t j = 0; j < k; ++j) {
        batch.items.push_back(pool[pick(rng)]);
        batch.labels.push_back(subject);
      }
    }
  }
  return batch;
}

SampledBatch sample_batch(const DatasetManifest& manifest, const BatchSpec& spec, std::uint64_t seed) {
  return sample_batch(SubjectIndex(manifest), spec, seed);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
AdamState<Scalar> adam_init(const ParamSet<Scalar>& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads, AdamState<Scalar>& state,
               const OptimizerSpec& opt) {
  ++state.t;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  const auto b1 = static_cast<Scalar>(opt.beta1);
  const auto b2 = static_cast<Scalar>(opt.beta2);
  const auto step = static_cast<Scalar>(opt.learning_rate / c1);
  const auto eps = static_cast<Scalar>(opt.epsilon);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    params[i].array() -= step * m.array() / ((v.array() * inv_c2).sqrt() + eps);
  }
}

template AdamState<float> adam_init(const ParamSet<float>&);
template AdamState<double> adam_init(const ParamSet<double>&);
template void adam_step(ParamSet<float>&, const ParamSet<float>&, AdamState<float>&, const OptimizerSpec&);
template void adam_step(ParamSet<double>&, const ParamSet<double>&, AdamState<double>&, const OptimizerSpec&);

// ---------------------------------------------------------------------------

CubeStore::CubeStore(DatasetManifest manifest)
    : manifest_(std::move(manifest)), records_(manifest_.samples()), index_(manifest_) {
  if (records_.empty()) fail(Errc::EmptyDataset, "no samples in " + manifest_.root.string());
  cubes_.reserve(records_.size());
  for (const auto& r : records_) {
    cubes_.push_back(read_cube_payload(r.path));
    if (cubes_.back().shape != cubes_.front().shape)
      fail(Errc::ShapeMismatch, r.path.string() + " has shape " + to_string(cubes_.back().shape) + ", expected " +
                                    to_string(cubes_.front().shape));
  }
}

void parallel_for(int n, int threads, const std::function<void(int, int, int)>& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    const int begin = static_cast<int>(static_cast<long long>(n) * w / threads);
    const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / threads);
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(w, begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kTapeBudgetBytes = std::size_t{1} << 30;

std::size_t tape_bytes(const BackboneTape<float>& tape) {
  std::size_t n = 0;
  for (const auto& b : tape.buffers) n += static_cast<std::size_t>(b.data.size()) * sizeof(float);
  for (const auto& a : tape.argmax) n += a.size() * sizeof(std::int32_t);
  return n;
}

std::uint64_t batch_seed(const TrainState& state, const std::string& stage) {
  return derive_seed(state.rng_seed, stage + "/batch/" + std::to_string(state.step));
}

void append_log(const fs::path& out_dir, const std::string& stage, int epoch, double mean_loss, double seconds) {
  const fs::path path = out_dir / (stage + "_log.csv");
  const bool fresh = !fs::exists(path) || epoch == 1;
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  if (fresh) out << "epoch,mean_loss,wall_time\n";
  out.precision(17);
  out << epoch << ',' << mean_loss << ',' << seconds << '\n';
}

void scale(ParamSet<float>& p, float s) {
  for (auto& t : p.tensors) t.value *= s;
}

void check_loss(double loss, const TrainState& state) {
  if (!std::isfinite(loss))
    fail(Errc::NonFinite, state.stage + " loss is " + std::to_string(loss) + " at epoch " +
                              std::to_string(state.epoch + 1) + ", step " + std::to_string(state.step));
}

// Runs the epoch loop shared by both stages; `run_batch` returns the batch loss.
template <typename BatchFn, typename SaveFn>
TrainState run_epochs(const TrainOptions& opt, TrainState state, BatchFn&& run_batch, SaveFn&& save) {
  const int last = opt.epochs_to_run < 0 ? opt.optimizer.max_epochs
                                         : std::min(opt.optimizer.max_epochs, state.epoch + opt.epochs_to_run);
  for (; state.epoch < last;) {
    const auto t0 = std::chrono::steady_clock::now();
    double sum = 0.0;
    for (int b = 0; b < opt.batch.batches_per_epoch; ++b) {
      const double loss = run_batch(state);
      check_loss(loss, state);
      state.loss_history.push_back(loss);
      ++state.step;
      sum += loss;
    }
    ++state.epoch;
    const double mean = sum / opt.batch.batches_per_epoch;
    state.epoch_losses.push_back(mean);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!opt.out_dir.empty()) {
      fs::create_directories(opt.out_dir);
      append_log(opt.out_dir, state.stage, state.epoch, mean, seconds);
      save(state);
    }
    if (opt.on_epoch) opt.on_epoch(state);
  }
  return state;
}

}  // namespace

fs::path checkpoint_path(const fs::path& out_dir, const std::string& stage) { return out_dir / (stage + ".ckpt"); }

TrainState train_backbone(const CubeStore& data, BackboneModel& model, const TrainOptions& opt, TrainState state) {
  if (state.stage != "backbone") fail(Errc::InvalidConfig, "train_backbone needs a backbone-stage state");
  if (model.net == nullptr) fail(Errc::InvalidConfig, "no backbone network");
  opt.batch.validate();
  opt.optimizer.validate();
  opt.triplet.validate();
  if (model.adam.m.size() != model.params.size()) model.adam = adam_init(model.params);

  const Backbone<float>& net = *model.net;
  const int dim = net.embedding_dim();
  const int n = opt.batch.batch_size();
  const int threads = std::max(1, opt.threads);

  auto run_batch = [&](const TrainState& st) {
    const SampledBatch batch = sample_batch(data.index(), opt.batch, batch_seed(st, "backbone"));
    TripletConfig tcfg = opt.triplet;
    tcfg.margin = margin_for_epoch(opt.triplet, opt.margin_schedule, st.epoch, opt.optimizer.max_epochs);

    // Tapes are kept across the batch when they fit the budget; otherwise
    // backward recomputes each forward pass.
    BackboneTape<float> probe;
    RowMatrix<float> emb(n, dim);
    emb.row(0) = net.forward(data.cube(batch.items[0]), model.params, &probe).transpose();
    const bool keep = tape_bytes(probe) * static_cast<std::size_t>(n) <= kTapeBudgetBytes;
    std::vector<BackboneTape<float>> tapes(keep ? static_cast<std::size_t>(n) : 0);
    if (keep) tapes[0] = std::move(probe);
    parallel_for(n - 1, threads, [&](int, int begin, int end) {
      for (int i = begin + 1; i < end + 1; ++i)
        emb.row(i) = net.forward(data.cube(batch.items[i]), model.params, keep ? &tapes[i] : nullptr).transpose();
    });

    const auto triplets = mine_triplets<float>(emb, batch.labels, tcfg);
    const auto result = triplet_batch_loss<float>(emb, triplets, tcfg.margin, tcfg.simultaneous_triplets);
    if (!std::isfinite(static_cast<double>(result.loss)) || triplets.empty()) return static_cast<double>(result.loss);

    std::vector<ParamSet<float>> partial(static_cast<std::size_t>(threads));
    parallel_for(n, threads, [&](int w, int begin, int end) {
      auto& grads = partial[static_cast<std::size_t>(w)];
      grads = zeros_like(model.params);
      BackboneTape<float> local;
      for (int i = begin; i < end; ++i) {
        const Vector<float> g = result.grad.row(i).transpose();
        if (g.cwiseAbs().maxCoeff() == 0.0f) continue;
        const BackboneTape<float>* tape = &local;
        if (keep)
          tape = &tapes[i];
        else
          net.forward(data.cube(batch.items[i]), model.params, &local);
        net.backward(*tape, g, model.params, grads);
      }
    });
    ParamSet<float> grads = std::move(partial[0]);
    for (std::size_t w = 1; w < partial.size(); ++w)
      if (partial[w].size() == grads.size()) accumulate(grads, partial[w]);
    adam_step(model.params, grads, model.adam, opt.optimizer);
    return static_cast<double>(result.loss);
  };

  auto save = [&](const TrainState& st) {
    save_checkpoint(checkpoint_path(opt.out_dir, "backbone"), pack_backbone(model, st, opt));
  };
  return run_epochs(opt, std::move(state), run_batch, save);
}

ParamSet<float> init_classifier(int embedding_dim, int num_classes, std::uint64_t seed) {
  if (embedding_dim < 1 || num_classes < 1) fail(Errc::InvalidConfig, "classifier needs positive dimensions");
  ParamSet<float> p;
  p.tensors.push_back({"arcface/w", Matrix<float>(embedding_dim, num_classes)});
  std::mt19937_64 rng(seed);
  glorot_uniform(p[0], embedding_dim, num_classes, rng);
  return p;
}

RowMatrix<float> backbone_features(const CubeStore& data, const Backbone<float>& net, const ParamSet<float>& params,
                                   int threads) {
  RowMatrix<float> out(static_cast<Eigen::Index>(data.size()), net.embedding_dim());
  parallel_for(static_cast<int>(data.size()), threads, [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) out.row(i) = net.forward(data.cube(i), params).transpose();
  });
  return out;
}

TrainState train_head(const CubeStore& data, BackboneModel& backbone, HeadModel& head, const TrainOptions& opt,
                      TrainState state) {
  if (state.stage != "head") fail(Errc::InvalidConfig, "train_head needs a head-stage state");
  if (backbone.net == nullptr || head.net == nullptr) fail(Errc::InvalidConfig, "missing network");
  opt.batch.validate();
  opt.optimizer.validate();
  ArcConfig arc = opt.arc;
  arc.num_classes = data.index().num_subjects();
  arc.validate();
  if (head.net->config().input_dim != backbone.net->embedding_dim())
    fail(Errc::ShapeMismatch, "head input " + std::to_string(head.net->config().input_dim) +
                                  " does not match backbone embedding " +
                                  std::to_string(backbone.net->embedding_dim()));
  if (head.classifier.size() != 1 || head.classifier[0].cols() != arc.num_classes ||
      head.classifier[0].rows() != head.net->config().fc2_units)
    fail(Errc::ShapeMismatch, "classifier weights must be " + std::to_string(head.net->config().fc2_units) + " x " +
                                  std::to_string(arc.num_classes));
  if (head.adam.m.size() != head.params.size()) head.adam = adam_init(head.params);
  if (head.classifier_adam.m.size() != head.classifier.size()) head.classifier_adam = adam_init(head.classifier);
  if (opt.fine_tune_backbone && backbone.adam.m.size() != backbone.params.size())
    backbone.adam = adam_init(backbone.params);

  const bool frozen = !opt.fine_tune_backbone;
  const int threads = std::max(1, opt.threads);
  const int n = opt.batch.batch_size();
  const RowMatrix<float> features =
      frozen ? backbone_features(data, *backbone.net, backbone.params, threads) : RowMatrix<float>();

  struct Partial {
    ParamSet<float> head, classifier, backbone;
    std::vector<double> losses;
  };

  auto run_batch = [&](const TrainState& st) {
    const SampledBatch batch = sample_batch(data.index(), opt.batch, batch_seed(st, "head"));
    std::vector<Partial> partial(static_cast<std::size_t>(threads));
    parallel_for(n, threads, [&](int w, int begin, int end) {
      auto& p = partial[static_cast<std::size_t>(w)];
      p.head = zeros_like(head.params);
      p.classifier = zeros_like(head.classifier);
      if (!frozen) p.backbone = zeros_like(backbone.params);
      BackboneTape<float> btape;
      HeadTape<float> htape;
      for (int i = begin; i < end; ++i) {
        const int item = batch.items[i];
        const Vector<float> e = frozen ? Vector<float>(features.row(item).transpose())
                                       : backbone.net->forward(data.cube(item), backbone.params, &btape);
        const Vector<float> h = head.net->forward(e, head.params, &htape);
        Vector<float> gh = Vector<float>::Zero(h.size());
        const float loss =
            classifier_loss<float>(h, head.classifier[0], batch.labels[i], arc, opt.classifier, &gh, &p.classifier[0]);
        p.losses.push_back(loss);
        const Vector<float> ge = head.net->backward(htape, gh, head.params, p.head);
        if (!frozen) backbone.net->backward(btape, ge, backbone.params, p.backbone);
      }
    });

    double loss = 0.0;
    for (const auto& p : partial)
      for (double l : p.losses) loss += l;
    loss /= n;
    if (!std::isfinite(loss)) return loss;

    for (std::size_t w = 1; w < partial.size(); ++w) {
      accumulate(partial[0].head, partial[w].head);
      accumulate(partial[0].classifier, partial[w].classifier);
      if (!frozen) accumulate(partial[0].backbone, partial[w].backbone);
    }
    const float inv = 1.0f / static_cast<float>(n);
    scale(partial[0].head, inv);
    scale(partial[0].classifier, inv);
    adam_step(head.params, partial[0].head, head.adam, opt.optimizer);
    adam_step(head.classifier, partial[0].classifier, head.classifier_adam, opt.optimizer);
    if (!frozen) {
      scale(partial[0].backbone, inv);
      adam_step(backbone.params, partial[0].backbone, backbone.adam, opt.optimizer);
    }
    return loss;
  };

  auto save = [&](const TrainState& st) {
    save_checkpoint(checkpoint_path(opt.out_dir, "head"), pack_head(head, st, opt));
    if (!frozen) {
      TrainState bstate = st;
      bstate.stage = "backbone";
      save_checkpoint(opt.out_dir / "backbone_finetuned.ckpt", pack_backbone(backbone, bstate, opt));
    }
  };
  return run_epochs(opt, std::move(state), run_batch, save);
}

double classifier_accuracy(const RowMatrix<float>& features, std::span<const int> labels, const Head<float>& head,
                           const ParamSet<float>& head_params, const ParamSet<float>& classifier) {
  if (features.rows() == 0) return 0.0;
  const Matrix<float> w = normalize_columns(classifier[0]);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Vector<float> h = head.forward(features.row(i).transpose(), head_params);
    const Vector<float> logits = cosine_logits<float>(h, w, 1.0f);
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(features.rows());
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json base_metadata(const TrainState& state, const TrainOptions& opt) {
  nlohmann::json meta = opt.extra_metadata;
  meta["config_hash"] = opt.config_hash;
  meta["preset"] = opt.preset;
  meta["stage"] = state.stage;
  meta["epoch"] = state.epoch;
  meta["state"] = to_json(state);
  return meta;
}

void check_stage(const Checkpoint& ckpt, const std::string& stage) {
  if (ckpt.metadata.value("stage", std::string()) != stage)
    fail(Errc::CorruptCheckpoint, "expected a " + stage + " checkpoint, found stage '" +
                                      ckpt.metadata.value("stage", std::string()) + "'");
}

// Copies tensors into `dst` by name; every name in dst must be present with
// the same shape.
void restore(const ParamSet<float>& src, ParamSet<float>& dst, const std::string& what) {
  for (auto& t : dst.tensors) {
    const int i = src.find(t.name);
    if (i < 0) fail(Errc::CorruptCheckpoint, what + ": missing tensor " + t.name);
    const auto& v = src[static_cast<std::size_t>(i)];
    if (v.rows() != t.value.rows() || v.cols() != t.value.cols())
      fail(Errc::CorruptCheckpoint, what + ": tensor " + t.name + " has the wrong shape");
    t.value = v;
  }
}

void restore_adam(const Checkpoint& ckpt, const std::string& group, const ParamSet<float>& params,
                  AdamState<float>& adam, std::int64_t t) {
  adam = adam_init(params);
  adam.t = t;
  restore(extract_group(ckpt, "adam/m/" + group), adam.m, "adam moments");
  restore(extract_group(ckpt, "adam/v/" + group), adam.v, "adam moments");
}

}  // namespace

Checkpoint pack_backbone(const BackboneModel& model, const TrainState& state, const TrainOptions& opt) {
  Checkpoint ckpt;
  ckpt.metadata = base_metadata(state, opt);
  ckpt.metadata["stage"] = "backbone";
  ckpt.metadata["adam_t"] = model.adam.t;
  append_group(ckpt, "backbone/", model.params);
  if (model.adam.m.size() == model.params.size()) {
    append_group(ckpt, "adam/m/backbone/", model.adam.m);
    append_group(ckpt, "adam/v/backbone/", model.adam.v);
  }
  return ckpt;
}

void unpack_backbone(const Checkpoint& ckpt, BackboneModel& model, TrainState& state) {
  check_stage(ckpt, "backbone");
  if (model.net == nullptr) fail(Errc::InvalidConfig, "no backbone network");
  if (model.params.size() == 0) model.params = model.net->init_params(0);
  restore(extract_group(ckpt, "backbone/"), model.params, "backbone");
  if (ckpt.tensors.find("adam/m/backbone/" + model.params.tensors.front().name) >= 0)
    restore_adam(ckpt, "backbone/", model.params, model.adam, ckpt.metadata.value("adam_t", std::int64_t{0}));
  else
    model.adam = adam_init(model.params);
  state = train_state_from_json(ckpt.metadata.at("state"));
  state.stage = "backbone";
}

Checkpoint pack_head(const HeadModel& head, const TrainState& state, const TrainOptions& opt) {
  Checkpoint ckpt;
  ckpt.metadata = base_metadata(state, opt);
  ckpt.metadata["stage"] = "head";
  ckpt.metadata["adam_t"] = head.adam.t;
  ckpt.metadata["classifier_adam_t"] = head.classifier_adam.t;
  append_group(ckpt, "head/", head.params);
  append_group(ckpt, "", head.classifier);
  if (head.adam.m.size() == head.params.size()) {
    append_group(ckpt, "adam/m/head/", head.adam.m);
    append_group(ckpt, "adam/v/head/", head.adam.v);
  }
  if (head.classifier_adam.m.size() == head.classifier.size()) {
    append_group(ckpt, "adam/m/", head.classifier_adam.m);
    append_group(ckpt, "adam/v/", head.classifier_adam.v);
  }
  return ckpt;
}

void unpack_head(const Checkpoint& ckpt, HeadModel& head, TrainState& state) {
  check_stage(ckpt, "head");
  if (head.net == nullptr) fail(Errc::InvalidConfig, "no head network");
  if (head.params.size() == 0) head.params = head.net->init_params(0);
  restore(extract_group(ckpt, "head/"), head.params, "head");
  const int w = ckpt.tensors.find("arcface/w");
  if (w < 0) fail(Errc::CorruptCheckpoint, "head checkpoint lacks arcface/w");
  head.classifier = ParamSet<float>{};
  head.classifier.tensors.push_back({"arcface/w", ckpt.tensors[static_cast<std::size_t>(w)]});
  if (ckpt.tensors.find("adam/m/head/fc1/w") >= 0)
    restore_adam(ckpt, "head/", head.params, head.adam, ckpt.metadata.value("adam_t", std::int64_t{0}));
  else
    head.adam = adam_init(head.params);
  if (ckpt.tensors.find("adam/m/arcface/w") >= 0)
    restore_adam(ckpt, "", head.classifier, head.classifier_adam,
                 ckpt.metadata.value("classifier_adam_t", std::int64_t{0}));
  else
    head.classifier_adam = adam_init(head.classifier);
  state = train_state_from_json(ckpt.metadata.at("state"));
  state.stage = "head";
}

}  // namespace fhsst
