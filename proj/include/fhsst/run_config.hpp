#pragma once

#include "fhsst/backbone.hpp"
#include "fhsst/datakit.hpp"
#include "fhsst/evaluation.hpp"
#include "fhsst/head.hpp"
#include "fhsst/losses.hpp"
#include "fhsst/montage.hpp"
#include "fhsst/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fhsst {

/// Environment variable naming a config file applied over the defaults.
inline constexpr const char* kConfigEnvVar = "FHSST_CONFIG";

/// Built-in defaults, every key present.
nlohmann::json default_config();

struct ConfigKey {
  std::string key;  // "section.name"
  std::string help;
};

/// Every leaf key of default_config() with a one-line description, in
/// document order.
const std::vector<ConfigKey>& documented_keys();

/// Overlays `overlay` onto `base`. Unknown keys and type changes throw
/// InvalidConfig. Setting montage.preset expands the preset's geometry before
/// any explicit montage keys in the same overlay are applied.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overlay);

/// Sets one dotted key from command-line text, parsed by the type of the
/// existing value.
void set_config_value(nlohmann::json& cfg, const std::string& dotted_key, const std::string& text);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Typed, validated view of a merged config.
struct RunConfig {
  nlohmann::json raw;
  MontageConfig montage;
  std::string backbone_source;  // "full", "reduced" or a JSON file
  BackboneConfig backbone;
  HeadConfig head;
  TripletConfig triplet;
  MarginSchedule margin_schedule = MarginSchedule::Constant;
  ArcConfig arc;
  ClassifierLoss classifier = ClassifierLoss::ArcFace;
  BatchSpec batch;
  OptimizerSpec backbone_optimizer;
  OptimizerSpec head_optimizer;
  std::uint64_t seed = 0;
  int threads = 1;
  bool fine_tune_backbone = false;
  SplitOptions split;
  SynthSpec synth;

  /// Hash of the backbone architecture; guards stage-1 checkpoints.
  std::string backbone_hash() const;
  /// Hash of backbone plus head architecture; guards stage-2 checkpoints.
  std::string head_hash() const;

  TrainOptions train_options(const std::string& stage) const;
};

RunConfig resolve_config(const nlohmann::json& cfg);

}  // namespace fhsst
