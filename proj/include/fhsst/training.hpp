#pragma once

#include "fhsst/backbone.hpp"
#include "fhsst/checkpoint.hpp"
#include "fhsst/datakit.hpp"
#include "fhsst/head.hpp"
#include "fhsst/losses.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fhsst {

struct BatchSpec {
  int persons_per_batch = 100;
  int images_per_person = 5;
  int batches_per_epoch = 1000;

  int batch_size() const { return persons_per_batch * images_per_person; }
  void validate() const;
};

struct OptimizerSpec {
  double learning_rate = 1e-5;
  int max_epochs = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

enum class MarginSchedule { Constant, LinearRamp };

std::string to_string(MarginSchedule s);
MarginSchedule margin_schedule_from(const std::string& s);

/// Triplet margin used in `epoch` (0-based) of `max_epochs`. LinearRamp moves
/// from cfg.margin at the first epoch to cfg.margin_max at the last.
double margin_for_epoch(const TripletConfig& cfg, MarginSchedule schedule, int epoch, int max_epochs);

struct TrainState {
  std::string stage = "backbone";
  int epoch = 0;           // completed epochs
  std::int64_t step = 0;   // completed batches
  std::uint64_t rng_seed = 0;
  std::vector<double> loss_history;  // one entry per batch
  std::vector<double> epoch_losses;  // mean of each completed epoch
};

nlohmann::json to_json(const TrainState& s);
TrainState train_state_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Batch sampling

/// Sample indices grouped by subject; `labels[i]` is the subject index of
/// sample i in manifest order.
struct SubjectIndex {
  std::vector<std::vector<int>> by_subject;
  std::vector<int> labels;

  explicit SubjectIndex(const DatasetManifest& manifest);
  int num_subjects() const { return static_cast<int>(by_subject.size()); }
};

struct SampledBatch {
  std::vector<int> items;   // sample indices in manifest order
  std::vector<int> labels;  // subject index per item
};

/// Pn distinct subjects drawn uniformly without replacement, then K samples
/// per subject: without replacement when the subject has at least K samples,
/// with replacement otherwise. Items are grouped by subject in draw order.
SampledBatch sample_batch(const SubjectIndex& index, const BatchSpec& spec, std::uint64_t seed);
SampledBatch sample_batch(const DatasetManifest& manifest, const BatchSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Optimizer

/// Adam with bias correction. Moments are kept per tensor in parameter order.
template <typename Scalar>
struct AdamState {
  ParamSet<Scalar> m;
  ParamSet<Scalar> v;
  std::int64_t t = 0;
};

template <typename Scalar>
AdamState<Scalar> adam_init(const ParamSet<Scalar>& params);

template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads, AdamState<Scalar>& state,
               const OptimizerSpec& opt);

// ---------------------------------------------------------------------------
// Data

/// Cube payloads for every sample of a preprocessed manifest, loaded once.
class CubeStore {
 public:
  explicit CubeStore(DatasetManifest manifest);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<SampleRecord>& records() const { return records_; }
  const SubjectIndex& index() const { return index_; }
  std::size_t size() const { return records_.size(); }
  const Tensor4<float>& cube(std::size_t i) const { return cubes_[i]; }

 private:
  DatasetManifest manifest_;
  std::vector<SampleRecord> records_;
  SubjectIndex index_;
  std::vector<Tensor4<float>> cubes_;
};

/// Calls fn(worker, begin, end) over a static partition of [0, n).
void parallel_for(int n, int threads, const std::function<void(int, int, int)>& fn);

// ---------------------------------------------------------------------------
// Stages

struct TrainOptions {
  BatchSpec batch;
  OptimizerSpec optimizer;
  TripletConfig triplet;
  MarginSchedule margin_schedule = MarginSchedule::Constant;
  ArcConfig arc;
  ClassifierLoss classifier = ClassifierLoss::ArcFace;
  bool fine_tune_backbone = false;
  int threads = 1;
  int epochs_to_run = -1;  // stop after this many epochs in this call; -1 runs to max_epochs

  // Per-epoch checkpoint and CSV log; nothing is written when empty.
  std::filesystem::path out_dir;
  std::string config_hash;
  std::string preset;
  nlohmann::json extra_metadata = nlohmann::json::object();

  std::function<void(const TrainState&)> on_epoch;  // called after each epoch
};

struct BackboneModel {
  const Backbone<float>* net = nullptr;
  ParamSet<float> params;
  AdamState<float> adam;
};

struct HeadModel {
  const Head<float>* net = nullptr;
  ParamSet<float> params;
  AdamState<float> adam;
  ParamSet<float> classifier;  // "arcface/w": embedding x num_classes
  AdamState<float> classifier_adam;
};

/// `out_dir/<stage>.ckpt`, rewritten after every epoch; the CSV log sits next
/// to it as `<stage>_log.csv`.
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, const std::string& stage);

/// Stage 1: triplet training of the backbone. Epochs continue from
/// state.epoch; batch seeds derive from (state.rng_seed, step) so a resumed
/// run replays the same batches as an uninterrupted one.
TrainState train_backbone(const CubeStore& data, BackboneModel& model, const TrainOptions& opt, TrainState state);

/// Fresh ArcFace classifier weights (Glorot uniform) for `num_classes`.
ParamSet<float> init_classifier(int embedding_dim, int num_classes, std::uint64_t seed);

/// Stage 2: head and classifier training over backbone features. The backbone
/// is read-only unless opt.fine_tune_backbone is set.
TrainState train_head(const CubeStore& data, BackboneModel& backbone, HeadModel& head, const TrainOptions& opt,
                      TrainState state);

/// Backbone embeddings of every sample (rows in manifest order).
RowMatrix<float> backbone_features(const CubeStore& data, const Backbone<float>& net, const ParamSet<float>& params,
                                   int threads = 1);

/// Fraction of samples whose nearest classifier column (cosine) is their own
/// subject.
double classifier_accuracy(const RowMatrix<float>& features, std::span<const int> labels, const Head<float>& head,
                           const ParamSet<float>& head_params, const ParamSet<float>& classifier);

// ---------------------------------------------------------------------------
// Checkpoint packing

Checkpoint pack_backbone(const BackboneModel& model, const TrainState& state, const TrainOptions& opt);
void unpack_backbone(const Checkpoint& ckpt, BackboneModel& model, TrainState& state);
Checkpoint pack_head(const HeadModel& head, const TrainState& state, const TrainOptions& opt);
void unpack_head(const Checkpoint& ckpt, HeadModel& head, TrainState& state);

}  // namespace fhsst
