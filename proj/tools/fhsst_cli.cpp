// fhsst: command-line driver for the forehead-crease verification pipeline.
//
//   fhsst synth          --out DIR
//   fhsst preprocess     --input DIR|FILE --out DIR [--preset NAME]
//   fhsst train-backbone --data DIR --out DIR
//   fhsst train-head     --data DIR --backbone CKPT --out DIR
//   fhsst embed          --data DIR --out DIR [--backbone CKPT --head CKPT | --untrained]
//   fhsst evaluate       (--embeddings CSV | --scores CSV) --out DIR
//   fhsst config         [--keys | --backbone]
//   fhsst shape-plan
//
// Any config key can be set with --section.key VALUE, anywhere on the line.
// Exit status: 0 success, 1 invalid input or config, 2 runtime failure.

#include "fhsst/backbone.hpp"
#include "fhsst/checkpoint.hpp"
#include "fhsst/datakit.hpp"
#include "fhsst/errors.hpp"
#include "fhsst/evaluation.hpp"
#include "fhsst/hash.hpp"
#include "fhsst/head.hpp"
#include "fhsst/image.hpp"
#include "fhsst/montage.hpp"
#include "fhsst/run_config.hpp"
#include "fhsst/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fhsst;

namespace {

struct Globals {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> key_options;
};

RunConfig load_run_config(const Globals& g) {
  json cfg = default_config();
  std::string file = g.config_file;
  if (file.empty())
    if (const char* env = std::getenv(kConfigEnvVar)) file = env;
  if (!file.empty()) cfg = merge_config(cfg, read_json_file(file));
  // The preset goes first so explicit geometry keys can refine it.
  if (g.key_options.at("montage.preset")->count() > 0)
    set_config_value(cfg, "montage.preset", g.overrides.at("montage.preset"));
  for (const auto& [key, opt] : g.key_options)
    if (key != "montage.preset" && opt->count() > 0) set_config_value(cfg, key, g.overrides.at(key));
  return resolve_config(cfg);
}

DatasetManifest open_dataset(const fs::path& path) {
  if (fs::is_regular_file(path)) return read_manifest_index(path);
  if (!fs::is_directory(path)) fail(Errc::IoFailure, path.string() + " does not exist");
  if (fs::exists(path / kManifestIndexName)) return read_manifest_index(path / kManifestIndexName);
  return load_manifest(path);
}

// Content fingerprint of a dataset: sample ids plus, for cubes, the sidecar
// (which carries the source image hash and layout), else the file bytes.
std::string dataset_fingerprint(const DatasetManifest& m) {
  Fnv1a64 h;
  for (const auto& r : m.samples()) {
    h.update(r.sample_id);
    const fs::path side = cube_sidecar(r.path);
    h.update(fs::exists(side) ? hash_file_hex(side) : hash_file_hex(r.path));
  }
  return h.hex();
}

// ---------------------------------------------------------------------------
// Run manifest: `<out>/run.json` maps each command to the fingerprint of its
// inputs and the hashes of its outputs, so a repeated command can be skipped.

json read_run_manifest(const fs::path& out) {
  const fs::path p = out / "run.json";
  if (!fs::exists(p)) return json::object();
  json j = json::parse(std::ifstream(p), nullptr, false);
  return j.is_object() ? j : json::object();
}

bool up_to_date(const fs::path& out, const std::string& command, const std::string& fingerprint) {
  const json run = read_run_manifest(out);
  if (!run.contains(command)) return false;
  const json& entry = run[command];
  if (entry.value("fingerprint", std::string()) != fingerprint || entry.value("status", std::string()) != "complete")
    return false;
  for (const auto& [name, hash] : entry.at("outputs").items())
    if (!fs::exists(out / name) || hash_file_hex(out / name) != hash.get<std::string>()) return false;
  return true;
}

void record_run(const fs::path& out, const std::string& command, const std::string& fingerprint, const RunConfig& rc,
                const std::vector<std::string>& outputs, const std::string& status = "complete",
                const json& extra = json::object()) {
  fs::create_directories(out);
  json run = read_run_manifest(out);
  json entry = extra;
  entry["fingerprint"] = fingerprint;
  entry["status"] = status;
  entry["config"] = rc.raw;
  json hashes = json::object();
  for (const auto& name : outputs) hashes[name] = hash_file_hex(out / name);
  entry["outputs"] = hashes;
  run[command] = entry;
  std::ofstream f(out / "run.json", std::ios::trunc);
  f << run.dump(2) << '\n';
  if (!f) fail(Errc::IoFailure, "cannot write " + (out / "run.json").string());
}

std::string fingerprint_of(std::initializer_list<std::string> parts) {
  Fnv1a64 h;
  for (const auto& p : parts) {
    h.update(p);
    h.update(std::string_view("\x1f", 1));
  }
  return h.hex();
}

void log_epoch(const TrainState& s) {
  std::cerr << s.stage << " epoch " << s.epoch << " mean loss " << std::setprecision(6) << s.epoch_losses.back()
            << '\n';
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& rc, const fs::path& out) {
  const std::string fp = fingerprint_of({"synth", to_json(rc.synth).dump()});
  if (up_to_date(out, "synth", fp)) {
    std::cout << "synth: " << out.string() << " is up to date\n";
    return 0;
  }
  const DatasetManifest m = generate_synthetic(rc.synth, out);
  record_run(out, "synth", fp, rc, {kManifestIndexName});
  std::cout << "synth: " << m.subjects.size() << " subjects, " << m.sample_count() << " images -> " << out.string()
            << '\n';
  return 0;
}

int cmd_preprocess(const RunConfig& rc, const fs::path& input, const fs::path& out) {
  struct Job {
    fs::path src, dst;
    std::string source_id;
  };
  std::vector<Job> jobs;
  const bool single = fs::is_regular_file(input) && input.extension() != ".json";
  if (single) {
    jobs.push_back({input, out / (input.stem().string() + ".cube"), input.stem().string()});
  } else {
    const DatasetManifest m = open_dataset(input);
    for (const auto& r : m.samples())
      jobs.push_back({r.path, out / r.subject_id / r.session_id / (r.path.stem().string() + ".cube"), r.sample_id});
  }

  const json layout = to_json(rc.montage);
  std::size_t written = 0, skipped = 0;
  for (const auto& job : jobs) {
    const std::string source_hash = hash_file_hex(job.src);
    const fs::path side = cube_sidecar(job.dst);
    if (fs::exists(job.dst) && fs::exists(side)) {
      const json meta = read_json_file(side);
      if (meta.value("source_hash", std::string()) == source_hash && meta.value("montage", json()) == layout) {
        ++skipped;
        continue;
      }
    }
    fs::create_directories(job.dst.parent_path());
    RoiImage img = read_image(job.src);
    img.source_id = job.source_id;
    MontageCube cube = build_cube(resize_roi(img, rc.montage), rc.montage);
    cube.source_id = job.source_id;
    write_cube(job.dst, cube, {{"source_hash", source_hash}, {"source_path", job.src.string()}});
    ++written;
  }

  if (!single) {
    DatasetManifest cubes = load_manifest(out);
    cubes.metadata = {{"normalization", "divide-255"}, {"montage", layout}, {"source", fs::absolute(input).string()}};
    write_manifest_index(cubes, out / kManifestIndexName);
    record_run(out, "preprocess", fingerprint_of({"preprocess", layout.dump(), dataset_fingerprint(cubes)}), rc,
               {kManifestIndexName});
  }
  std::cout << "preprocess: " << written << " cubes written, " << skipped << " unchanged, shape "
            << to_string(rc.montage.cube_shape()) << " -> " << out.string() << '\n';
  return 0;
}

void check_cube_shape(const CubeStore& store, const BackboneConfig& cfg) {
  if (!(store.cube(0).shape == cfg.input_shape))
    fail(Errc::ShapeMismatch, "cubes have shape " + to_string(store.cube(0).shape) + " but the backbone expects " +
                                  to_string(cfg.input_shape) + " (check montage.preset and model.backbone)");
}

json training_config_slice(const RunConfig& rc) {
  json j = rc.raw;
  j.erase("evaluation");
  j.erase("synth");
  return j;
}

int cmd_train_backbone(const RunConfig& rc, const fs::path& data, const fs::path& out) {
  const CubeStore store(open_dataset(data));
  check_cube_shape(store, rc.backbone);
  const std::string fp = fingerprint_of(
      {"train-backbone", training_config_slice(rc).dump(), dataset_fingerprint(store.manifest())});
  const fs::path ckpt = checkpoint_path(out, "backbone");
  if (up_to_date(out, "train-backbone", fp)) {
    std::cout << "train-backbone: " << ckpt.string() << " is up to date\n";
    return 0;
  }

  const Backbone<float> net(rc.backbone);
  BackboneModel model{&net, {}, {}};
  TrainState state;
  state.stage = "backbone";
  state.rng_seed = derive_seed(rc.seed, "train/backbone");
  const json run = read_run_manifest(out);
  if (fs::exists(ckpt) && run.contains("train-backbone") && run["train-backbone"].value("fingerprint", "") == fp) {
    unpack_backbone(load_checkpoint(ckpt, rc.backbone_hash()), model, state);
    std::cerr << "resuming stage 1 after epoch " << state.epoch << '\n';
  } else {
    model.params = net.init_params(derive_seed(rc.seed, "init/backbone"));
  }

  TrainOptions opt = rc.train_options("backbone");
  opt.out_dir = out;
  opt.extra_metadata = {{"backbone_config", to_json(rc.backbone)}, {"montage", to_json(rc.montage)}};
  opt.on_epoch = log_epoch;
  record_run(out, "train-backbone", fp, rc, {}, "running");
  state = train_backbone(store, model, opt, std::move(state));
  if (!fs::exists(ckpt)) save_checkpoint(ckpt, pack_backbone(model, state, opt));
  record_run(out, "train-backbone", fp, rc, {"backbone.ckpt", "backbone_log.csv"}, "complete",
             {{"epochs", state.epoch}, {"steps", state.step}});
  std::cout << "train-backbone: " << state.epoch << " epochs, final mean loss "
            << (state.epoch_losses.empty() ? 0.0 : state.epoch_losses.back()) << " -> " << ckpt.string() << '\n';
  return 0;
}

BackboneModel load_backbone(const RunConfig& rc, const Backbone<float>& net, const fs::path& path) {
  BackboneModel model{&net, {}, {}};
  TrainState ignored;
  unpack_backbone(load_checkpoint(path, rc.backbone_hash()), model, ignored);
  return model;
}

int cmd_train_head(const RunConfig& rc, const fs::path& data, const fs::path& backbone_ckpt, const fs::path& out) {
  const CubeStore store(open_dataset(data));
  check_cube_shape(store, rc.backbone);
  const std::string fp = fingerprint_of({"train-head", training_config_slice(rc).dump(),
                                         dataset_fingerprint(store.manifest()), hash_file_hex(backbone_ckpt)});
  const fs::path ckpt = checkpoint_path(out, "head");
  if (up_to_date(out, "train-head", fp)) {
    std::cout << "train-head: " << ckpt.string() << " is up to date\n";
    return 0;
  }

  const Backbone<float> bnet(rc.backbone);
  BackboneModel backbone = load_backbone(rc, bnet, backbone_ckpt);
  const Head<float> hnet(rc.head);
  HeadModel head{&hnet, {}, {}, {}, {}};
  TrainState state;
  state.stage = "head";
  state.rng_seed = derive_seed(rc.seed, "train/head");
  const json run = read_run_manifest(out);
  if (fs::exists(ckpt) && run.contains("train-head") && run["train-head"].value("fingerprint", "") == fp) {
    unpack_head(load_checkpoint(ckpt, rc.head_hash()), head, state);
    std::cerr << "resuming stage 2 after epoch " << state.epoch << '\n';
  } else {
    head.params = hnet.init_params(derive_seed(rc.seed, "init/head"));
    head.classifier =
        init_classifier(rc.head.fc2_units, store.index().num_subjects(), derive_seed(rc.seed, "init/arcface"));
  }

  const std::string frozen_hash = params_hash(backbone.params);
  TrainOptions opt = rc.train_options("head");
  opt.out_dir = out;
  opt.extra_metadata = {{"head_config", to_json(rc.head)},
                        {"backbone_checkpoint", hash_file_hex(backbone_ckpt)},
                        {"num_classes", store.index().num_subjects()}};
  opt.on_epoch = log_epoch;
  record_run(out, "train-head", fp, rc, {}, "running");
  state = train_head(store, backbone, head, opt, std::move(state));
  if (!rc.fine_tune_backbone && params_hash(backbone.params) != frozen_hash)
    fail(Errc::NonFinite, "frozen backbone changed during stage 2");
  if (!fs::exists(ckpt)) save_checkpoint(ckpt, pack_head(head, state, opt));

  const RowMatrix<float> features = backbone_features(store, bnet, backbone.params, rc.threads);
  const double acc = classifier_accuracy(features, store.index().labels, hnet, head.params, head.classifier);
  std::vector<std::string> outputs = {"head.ckpt", "head_log.csv"};
  if (rc.fine_tune_backbone) outputs.push_back("backbone_finetuned.ckpt");
  record_run(out, "train-head", fp, rc, outputs, "complete",
             {{"epochs", state.epoch}, {"steps", state.step}, {"training_accuracy", acc}});
  std::cout << "train-head: " << state.epoch << " epochs, training accuracy " << acc << " -> " << ckpt.string()
            << '\n';
  return 0;
}

int cmd_embed(const RunConfig& rc, const fs::path& data, const fs::path& out, const std::string& backbone_ckpt,
              const std::string& head_ckpt, bool untrained) {
  if (!untrained && (backbone_ckpt.empty() || head_ckpt.empty()))
    fail(Errc::InvalidConfig, "embed needs --backbone and --head checkpoints, or --untrained");
  const CubeStore store(open_dataset(data));
  check_cube_shape(store, rc.backbone);
  const std::string fp = fingerprint_of({"embed", training_config_slice(rc).dump(),
                                         dataset_fingerprint(store.manifest()),
                                         untrained ? "untrained" : hash_file_hex(backbone_ckpt) + hash_file_hex(head_ckpt)});
  if (up_to_date(out, "embed", fp)) {
    std::cout << "embed: " << (out / "embeddings.csv").string() << " is up to date\n";
    return 0;
  }

  const Backbone<float> bnet(rc.backbone);
  const Head<float> hnet(rc.head);
  ParamSet<float> bparams, hparams;
  if (untrained) {
    bparams = bnet.init_params(derive_seed(rc.seed, "init/backbone"));
    hparams = hnet.init_params(derive_seed(rc.seed, "init/head"));
  } else {
    bparams = load_backbone(rc, bnet, backbone_ckpt).params;
    HeadModel head{&hnet, {}, {}, {}, {}};
    TrainState ignored;
    unpack_head(load_checkpoint(head_ckpt, rc.head_hash()), head, ignored);
    hparams = std::move(head.params);
  }

  const RowMatrix<float> features = backbone_features(store, bnet, bparams, rc.threads);
  fs::create_directories(out);
  std::ofstream csv(out / "embeddings.csv", std::ios::trunc);
  csv << "sample_id,subject_id,session_id";
  for (int k = 0; k < rc.head.fc2_units; ++k) csv << ",e" << k;
  csv << '\n' << std::setprecision(9);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Vector<float> e = hnet.forward(features.row(static_cast<Eigen::Index>(i)).transpose(), hparams);
    const auto& r = store.records()[i];
    csv << r.sample_id << ',' << r.subject_id << ',' << r.session_id;
    for (Eigen::Index k = 0; k < e.size(); ++k) csv << ',' << e[k];
    csv << '\n';
  }
  csv.close();
  if (!csv) fail(Errc::IoFailure, "cannot write embeddings.csv");
  record_run(out, "embed", fp, rc, {"embeddings.csv"}, "complete", {{"untrained", untrained}});
  std::cout << "embed: " << store.size() << " embeddings of dimension " << rc.head.fc2_units << " -> "
            << (out / "embeddings.csv").string() << '\n';
  return 0;
}

struct EmbeddingFile {
  EmbeddingTable table;
  DatasetManifest manifest;  // synthesized from the id columns, for splitting
};

EmbeddingFile read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,subject_id,session_id", 0) != 0)
    fail(Errc::MalformedLayout, path.string() + ": expected header sample_id,subject_id,session_id,e0,...");
  EmbeddingFile f;
  std::map<std::string, std::map<std::string, std::vector<std::string>>> tree;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, subject, session, cell;
    std::getline(ss, id, ',');
    std::getline(ss, subject, ',');
    std::getline(ss, session, ',');
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    if (dim == 0) dim = values.size();
    if (values.empty() || values.size() != dim) fail(Errc::MalformedLayout, path.string() + ": ragged row for " + id);
    const std::string prefix = subject + "/" + session + "/";
    if (id.rfind(prefix, 0) != 0) fail(Errc::MalformedLayout, id + " does not start with " + prefix);
    f.table[id] = Eigen::Map<const Vector<double>>(values.data(), static_cast<Eigen::Index>(values.size()));
    tree[subject][session].push_back(id.substr(prefix.size()));
  }
  for (auto& [subject, sessions] : tree) {
    SubjectEntry s{subject, {}};
    for (auto& [session, stems] : sessions) s.sessions.push_back({session, stems});
    f.manifest.subjects.push_back(std::move(s));
  }
  if (f.table.empty()) fail(Errc::EmptyDataset, path.string() + " has no embeddings");
  return f;
}

int cmd_evaluate(const RunConfig& rc, const std::string& embeddings, const std::string& scores_csv,
                 const fs::path& out) {
  if (embeddings.empty() == scores_csv.empty())
    fail(Errc::InvalidConfig, "evaluate needs exactly one of --embeddings or --scores");
  ScoreSet scores;
  std::vector<std::string> outputs = {"det.csv", "metrics.json", "metrics.txt"};
  fs::create_directories(out);
  if (!embeddings.empty()) {
    const EmbeddingFile f = read_embeddings(embeddings);
    const SplitPlan split = make_split(f.manifest, rc.split);
    for (const auto& r : split.reductions) std::cerr << "split: " << r << '\n';
    scores = score_protocol(f.table, split, true);
    write_scores_csv(out / "scores.csv", scores);
    outputs.insert(outputs.begin(), "scores.csv");
  } else {
    scores = read_scores_csv(scores_csv);
  }
  const DetCurve curve = det_curve(scores);
  const MetricsReport report = compute_metrics(scores);
  write_det_csv(out / "det.csv", curve);
  write_report(out / "metrics.json", report);
  const std::string text = format_report(report);
  std::ofstream(out / "metrics.txt") << text;
  record_run(out, "evaluate", fingerprint_of({"evaluate", embeddings.empty() ? hash_file_hex(scores_csv)
                                                                            : hash_file_hex(embeddings)}),
             rc, outputs);
  std::cout << text;
  return 0;
}

int cmd_shape_plan(const RunConfig& rc) {
  const ShapePlan plan = shape_plan(rc.backbone);
  std::cout << "backbone " << rc.backbone.name << ", input " << to_string(rc.backbone.input_shape) << '\n';
  for (const auto& s : plan.blocks) std::cout << "  " << s.name << ": " << to_string(s.shape) << '\n';
  std::cout << "  embedding: " << plan.embedding_dim << '\n';
  for (const auto& d : plan.divergences) std::cout << "  divergence: " << d << '\n';
  std::cout << "backbone parameters: " << count_params(rc.backbone) << '\n'
            << "head parameters: " << count_params(rc.head) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forehead-crease verification: montage cubes, 3D inception embeddings, two-stage training, "
               "gallery/probe evaluation."};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_file,
                 std::string("JSON config applied over the defaults (default: $") + kConfigEnvVar + ")");
  const json defaults = default_config();
  for (const auto& k : documented_keys()) {
    const auto dot = k.key.find('.');
    const json& def = defaults.at(k.key.substr(0, dot)).at(k.key.substr(dot + 1));
    const std::string shown = def.is_string() ? def.get<std::string>() : def.dump();
    g.key_options[k.key] = app.add_option("--" + k.key, g.overrides[k.key], k.help)
                               ->default_str(shown)
                               ->group("Config keys");
  }

  std::string out, input, data, backbone_ckpt, head_ckpt, embeddings, scores, preset;
  bool untrained = false, list_keys = false, show_backbone = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic subject/session/image tree");
  synth->add_option("--out", out, "output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "resize ROIs and write montage cubes");
  pre->add_option("--input", input, "image tree, manifest.json, or a single image")->required();
  pre->add_option("--out", out, "cube directory")->required();
  pre->add_option("--preset", preset, "shorthand for --montage.preset");

  auto* tb = app.add_subcommand("train-backbone", "stage 1: triplet training of the backbone");
  tb->add_option("--data", data, "cube directory or its manifest.json")->required();
  tb->add_option("--out", out, "run directory (checkpoint, log, run.json)")->required();

  auto* th = app.add_subcommand("train-head", "stage 2: head and ArcFace classifier over backbone features");
  th->add_option("--data", data, "cube directory or its manifest.json")->required();
  th->add_option("--backbone", backbone_ckpt, "stage-1 checkpoint")->required();
  th->add_option("--out", out, "run directory")->required();

  auto* em = app.add_subcommand("embed", "write 512-d embeddings of every cube");
  em->add_option("--data", data, "cube directory or its manifest.json")->required();
  em->add_option("--out", out, "output directory (embeddings.csv)")->required();
  em->add_option("--backbone", backbone_ckpt, "backbone checkpoint");
  em->add_option("--head", head_ckpt, "head checkpoint");
  em->add_flag("--untrained", untrained, "use freshly initialized weights");

  auto* ev = app.add_subcommand("evaluate", "gallery/probe scoring, DET curve and EER / TMR@FMR report");
  ev->add_option("--embeddings", embeddings, "embeddings.csv from embed");
  ev->add_option("--scores", scores, "existing score file (pair_type,gallery_id,probe_id,score)");
  ev->add_option("--out", out, "output directory")->required();

  auto* cf = app.add_subcommand("config", "print the resolved config as JSON");
  cf->add_flag("--keys", list_keys, "list documented keys instead");
  cf->add_flag("--backbone", show_backbone, "print the resolved backbone layer list instead");

  auto* sp = app.add_subcommand("shape-plan", "print per-block output shapes and parameter counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << '\n' << app.help();
    return 1;
  }

  try {
    if (!preset.empty()) {
      g.overrides["montage.preset"] = preset;
      g.key_options["montage.preset"]->add_result(preset);
    }
    const RunConfig rc = load_run_config(g);
    if (*synth) return cmd_synth(rc, out);
    if (*pre) return cmd_preprocess(rc, input, out);
    if (*tb) return cmd_train_backbone(rc, data, out);
    if (*th) return cmd_train_head(rc, data, backbone_ckpt, out);
    if (*em) return cmd_embed(rc, data, out, backbone_ckpt, head_ckpt, untrained);
    if (*ev) return cmd_evaluate(rc, embeddings, scores, out);
    if (*cf) {
      if (list_keys) {
        for (const auto& k : documented_keys()) std::cout << k.key << '\t' << k.help << '\n';
      } else if (show_backbone) {
        std::cout << to_json(rc.backbone).dump(2) << '\n';
      } else {
        std::cout << rc.raw.dump(2) << '\n';
      }
      return 0;
    }
    if (*sp) return cmd_shape_plan(rc);
  } catch (const Error& e) {
    std::cerr << "fhsst: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const json::exception& e) {
    std::cerr << "fhsst: malformed JSON: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fhsst: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
