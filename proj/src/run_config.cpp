#include "fhsst/run_config.hpp"

#include "fhsst/errors.hpp"
#include "fhsst/hash.hpp"

#include <fstream>

namespace fhsst {

using nlohmann::json;

json default_config() {
  const MontageConfig montage = montage_preset("shape-consistent");
  const TripletConfig triplet;
  const ArcConfig arc;
  const BatchSpec batch;
  const OptimizerSpec opt;
  const SplitOptions split;
  const HeadConfig head;
  json optimizer = {{"learning_rate", opt.learning_rate}, {"max_epochs", opt.max_epochs}, {"beta1", opt.beta1},
                    {"beta2", opt.beta2},                 {"epsilon", opt.epsilon}};
  return {
      {"montage", to_json(montage)},
      {"model", {{"backbone", "full"}, {"fc1_units", head.fc1_units}, {"fc2_units", head.fc2_units}}},
      {"triplet",
       {{"margin", triplet.margin},
        {"margin_max", triplet.margin_max},
        {"margin_schedule", to_string(MarginSchedule::Constant)},
        {"mining", to_string(triplet.mining)},
        {"simultaneous_triplets", triplet.simultaneous_triplets}}},
      {"arcface", {{"margin", arc.margin}, {"scale", arc.scale}, {"loss", "arcface"}}},
      {"batch",
       {{"persons_per_batch", batch.persons_per_batch},
        {"images_per_person", batch.images_per_person},
        {"batches_per_epoch", batch.batches_per_epoch}}},
      {"optimizer", optimizer},
      {"head_optimizer", optimizer},
      {"training", {{"seed", 1234}, {"threads", 1}, {"fine_tune_backbone", false}}},
      {"evaluation",
       {{"gallery_per_subject", split.gallery_per_subject},
        {"probe_per_subject", split.probe_per_subject},
        {"split", to_string(split.policy)},
        {"seed", 99}}},
      {"synth", to_json(SynthSpec{})},
  };
}

const std::vector<ConfigKey>& documented_keys() {
  static const std::vector<ConfigKey> keys = {
      {"montage.preset", "montage preset: paper-stated | shape-consistent | smoke (sets the geometry below)"},
      {"montage.roi_height", "ROI height in pixels after resizing"},
      {"montage.roi_width", "ROI width in pixels after resizing"},
      {"montage.patch_size", "square patch side P"},
      {"montage.stride", "patch stride S"},
      {"montage.expected_depth", "number of patches D in each cube"},
      {"model.backbone", "backbone: full | reduced | path to a backbone JSON file"},
      {"model.fc1_units", "head hidden width"},
      {"model.fc2_units", "head output width"},
      {"triplet.margin", "triplet margin"},
      {"triplet.margin_max", "largest margin reached by the linear ramp"},
      {"triplet.margin_schedule", "constant | linear-ramp"},
      {"triplet.mining", "batch-all-valid | batch-hard"},
      {"triplet.simultaneous_triplets", "triplets per micro-batch in the loss average"},
      {"arcface.margin", "additive angular margin (radians)"},
      {"arcface.scale", "logit scale"},
      {"arcface.loss", "arcface | cosine-softmax"},
      {"batch.persons_per_batch", "subjects per batch (P)"},
      {"batch.images_per_person", "samples per subject (K)"},
      {"batch.batches_per_epoch", "batches per epoch"},
      {"optimizer.learning_rate", "stage-1 Adam learning rate"},
      {"optimizer.max_epochs", "stage-1 epochs"},
      {"optimizer.beta1", "stage-1 first-moment decay"},
      {"optimizer.beta2", "stage-1 second-moment decay"},
      {"optimizer.epsilon", "stage-1 Adam epsilon"},
      {"head_optimizer.learning_rate", "stage-2 Adam learning rate"},
      {"head_optimizer.max_epochs", "stage-2 epochs"},
      {"head_optimizer.beta1", "stage-2 first-moment decay"},
      {"head_optimizer.beta2", "stage-2 second-moment decay"},
      {"head_optimizer.epsilon", "stage-2 Adam epsilon"},
      {"training.seed", "seed for initialization and batch sampling"},
      {"training.threads", "worker threads for per-sample passes"},
      {"training.fine_tune_backbone", "update the backbone during stage 2"},
      {"evaluation.gallery_per_subject", "gallery samples per subject"},
      {"evaluation.probe_per_subject", "probe samples per subject"},
      {"evaluation.split", "session | random"},
      {"evaluation.seed", "seed for the gallery/probe split"},
      {"synth.num_subjects", "synthetic subjects"},
      {"synth.samples_per_subject", "synthetic samples per subject"},
      {"synth.sessions", "sessions per subject"},
      {"synth.image_height", "synthetic image height"},
      {"synth.image_width", "synthetic image width"},
      {"synth.seed", "generator seed"},
      {"synth.warp_amplitude", "elastic warp amplitude in pixels"},
      {"synth.brightness_range", "brightness scale drawn from [1-r, 1+r]"},
      {"synth.noise_sigma", "Gaussian pixel noise"},
  };
  return keys;
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

void merge_into(json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object()) fail(Errc::InvalidConfig, "config section '" + path + "' must be an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) fail(Errc::InvalidConfig, "unknown config key '" + here + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, here);
    } else if (!same_kind(slot, value)) {
      fail(Errc::InvalidConfig, "config key '" + here + "' expects " + std::string(slot.type_name()) + ", got " +
                                    std::string(value.type_name()));
    } else if (slot.is_number_float()) {
      slot = value.get<double>();
    } else {
      slot = value;
    }
  }
}

void expand_montage_preset(json& cfg, const std::string& preset) {
  cfg["montage"] = to_json(montage_preset(preset));
}

}  // namespace

json merge_config(json base, const json& overlay) {
  if (!overlay.is_object()) fail(Errc::InvalidConfig, "config must be an object");
  if (overlay.contains("montage") && overlay["montage"].is_object() && overlay["montage"].contains("preset")) {
    const auto& p = overlay["montage"]["preset"];
    if (!p.is_string()) fail(Errc::InvalidConfig, "montage.preset must be a string");
    const std::string name = p.get<std::string>();
    if (name != "custom") expand_montage_preset(base, name);
  }
  merge_into(base, overlay, "");
  return base;
}

void set_config_value(json& cfg, const std::string& dotted_key, const std::string& text) {
  json* slot = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!slot->is_object() || !slot->contains(part)) fail(Errc::InvalidConfig, "unknown config key '" + dotted_key + "'");
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (slot->is_object()) fail(Errc::InvalidConfig, "'" + dotted_key + "' is a section, not a key");

  if (dotted_key == "montage.preset" && text != "custom") {
    expand_montage_preset(cfg, text);
    return;
  }
  try {
    std::size_t used = 0;
    if (slot->is_boolean()) {
      if (text != "true" && text != "false") fail(Errc::InvalidConfig, dotted_key + " expects true or false");
      *slot = text == "true";
    } else if (slot->is_number_unsigned()) {
      *slot = std::stoull(text, &used);
    } else if (slot->is_number_integer()) {
      *slot = std::stoll(text, &used);
    } else if (slot->is_number_float()) {
      *slot = std::stod(text, &used);
    } else {
      *slot = text;
      used = text.size();
    }
    if (used != text.size()) fail(Errc::InvalidConfig, "trailing characters in value for " + dotted_key);
  } catch (const std::logic_error&) {
    fail(Errc::InvalidConfig, "cannot parse '" + text + "' for " + dotted_key);
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(Errc::InvalidConfig, path.string() + " is not valid JSON");
  return j;
}

std::string RunConfig::backbone_hash() const { return hash_hex(to_json(backbone).dump()); }

std::string RunConfig::head_hash() const {
  return hash_hex(json{{"backbone", to_json(backbone)}, {"head", to_json(head)}}.dump());
}

TrainOptions RunConfig::train_options(const std::string& stage) const {
  TrainOptions o;
  o.batch = batch;
  o.optimizer = stage == "head" ? head_optimizer : backbone_optimizer;
  o.triplet = triplet;
  o.margin_schedule = margin_schedule;
  o.arc = arc;
  o.classifier = classifier;
  o.fine_tune_backbone = fine_tune_backbone;
  o.threads = threads;
  o.config_hash = stage == "head" ? head_hash() : backbone_hash();
  o.preset = montage.preset_name;
  return o;
}

namespace {

OptimizerSpec optimizer_from(const json& j) {
  OptimizerSpec o;
  o.learning_rate = j.at("learning_rate").get<double>();
  o.max_epochs = j.at("max_epochs").get<int>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.epsilon = j.at("epsilon").get<double>();
  o.validate();
  return o;
}

}  // namespace

RunConfig resolve_config(const json& cfg) {
  RunConfig rc;
  rc.raw = cfg;
  try {
    rc.montage = montage_from_json(cfg.at("montage"));
    rc.montage.validate();

    const auto& model = cfg.at("model");
    rc.backbone_source = model.at("backbone").get<std::string>();
    const Shape4 input = rc.montage.cube_shape();
    if (rc.backbone_source == "full" || rc.backbone_source == "reduced") {
      rc.backbone = backbone_preset(rc.backbone_source, input);
    } else {
      rc.backbone = backbone_from_json(read_json_file(rc.backbone_source));
      if (!(rc.backbone.input_shape == input))
        fail(Errc::InvalidConfig, "backbone input " + to_string(rc.backbone.input_shape) +
                                      " does not match the montage cube " + to_string(input));
    }
    shape_plan(rc.backbone);
    rc.head.input_dim = rc.backbone.embedding_dim;
    rc.head.fc1_units = model.at("fc1_units").get<int>();
    rc.head.fc2_units = model.at("fc2_units").get<int>();
    if (rc.head.fc1_units < 1 || rc.head.fc2_units < 1) fail(Errc::InvalidConfig, "head widths must be positive");

    const auto& t = cfg.at("triplet");
    rc.triplet.margin = t.at("margin").get<double>();
    rc.triplet.margin_max = t.at("margin_max").get<double>();
    rc.triplet.mining = mining_policy_from(t.at("mining").get<std::string>());
    rc.triplet.simultaneous_triplets = t.at("simultaneous_triplets").get<int>();
    rc.triplet.validate();
    rc.margin_schedule = margin_schedule_from(t.at("margin_schedule").get<std::string>());

    const auto& a = cfg.at("arcface");
    rc.arc.margin = a.at("margin").get<double>();
    rc.arc.scale = a.at("scale").get<double>();
    const std::string loss = a.at("loss").get<std::string>();
    if (loss == "arcface")
      rc.classifier = ClassifierLoss::ArcFace;
    else if (loss == "cosine-softmax")
      rc.classifier = ClassifierLoss::CosineSoftmax;
    else
      fail(Errc::InvalidConfig, "unknown arcface.loss '" + loss + "' (arcface | cosine-softmax)");

    const auto& b = cfg.at("batch");
    rc.batch.persons_per_batch = b.at("persons_per_batch").get<int>();
    rc.batch.images_per_person = b.at("images_per_person").get<int>();
    rc.batch.batches_per_epoch = b.at("batches_per_epoch").get<int>();
    rc.batch.validate();

    rc.backbone_optimizer = optimizer_from(cfg.at("optimizer"));
    rc.head_optimizer = optimizer_from(cfg.at("head_optimizer"));

    const auto& tr = cfg.at("training");
    rc.seed = tr.at("seed").get<std::uint64_t>();
    rc.threads = tr.at("threads").get<int>();
    if (rc.threads < 1) fail(Errc::InvalidConfig, "training.threads must be >= 1");
    rc.fine_tune_backbone = tr.at("fine_tune_backbone").get<bool>();

    const auto& e = cfg.at("evaluation");
    rc.split.gallery_per_subject = e.at("gallery_per_subject").get<int>();
    rc.split.probe_per_subject = e.at("probe_per_subject").get<int>();
    rc.split.policy = split_policy_from(e.at("split").get<std::string>());
    rc.split.seed = e.at("seed").get<std::uint64_t>();
    if (rc.split.gallery_per_subject < 1 || rc.split.probe_per_subject < 1)
      fail(Errc::InvalidConfig, "gallery and probe sizes must be >= 1");

    rc.synth = synth_from_json(cfg.at("synth"));
    rc.synth.validate();
  } catch (const json::exception& ex) {
    fail(Errc::InvalidConfig, std::string("config: ") + ex.what());
  }
  return rc;
}

}  // namespace fhsst
