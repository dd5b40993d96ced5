#pragma once
// Run configuration: one JSON document covering data source, split, stage
// hyperparameters, and the protocol grid. Validation is total — parsing
// collects every violation (unknown keys, wrong types, bad enum values,
// domain errors) and reports them together before any compute starts.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "casr/protocol.hpp"

namespace casr {

struct DataConfig {
  std::optional<std::filesystem::path> dataset;  // exported class-folder corpus
  std::optional<SyntheticSpec> synthetic;        // inline generator parameters
};

struct RunConfig {
  DataConfig data;
  SplitSpec split{};
  StageConfig stage{};  // the stage tag itself is fixed by the subcommand
  std::vector<SrFamily> families{SrFamily::CarnLite};
  std::vector<LossKind> losses{LossKind::Combo};
  int error_map_count = 4;
  int workers = 1;
  std::filesystem::path output_root = "runs";
  bool force = false;
  std::optional<std::filesystem::path> guide_checkpoint;  // finetune guide
  std::optional<std::filesystem::path> sr_checkpoint;     // infer weights
  std::optional<std::filesystem::path> dataset_out;       // generate target
};

namespace detail {

inline std::string json_type_name(const nlohmann::json& j) {
  return j.type_name();
}

inline void check_keys(const nlohmann::json& obj, const std::string& path,
                       const std::set<std::string>& allowed, std::vector<std::string>& v) {
  if (!obj.is_object()) {
    v.push_back(path + ": expected an object, got " + json_type_name(obj));
    return;
  }
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) v.push_back(path + "." + key + ": unknown key");
}

template <typename T>
void take(const nlohmann::json& obj, const std::string& path, const char* key, T& out,
          std::vector<std::string>& v) {
  if (!obj.is_object() || !obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const nlohmann::json::exception&) {
    v.push_back(path + "." + key + ": wrong type (got " + json_type_name(obj.at(key)) + ")");
  }
}

inline void take_path(const nlohmann::json& obj, const std::string& path, const char* key,
                      std::optional<std::filesystem::path>& out, std::vector<std::string>& v) {
  if (!obj.is_object() || !obj.contains(key)) return;
  if (!obj.at(key).is_string()) {
    v.push_back(path + "." + key + ": wrong type (expected string path)");
    return;
  }
  out = std::filesystem::path(obj.at(key).get<std::string>());
}

template <typename Enum, typename Parser>
void take_enum(const nlohmann::json& obj, const std::string& path, const char* key, Enum& out,
               Parser&& parse, std::vector<std::string>& v) {
  if (!obj.is_object() || !obj.contains(key)) return;
  if (!obj.at(key).is_string()) {
    v.push_back(path + "." + key + ": wrong type (expected string)");
    return;
  }
  try {
    out = parse(obj.at(key).get<std::string>());
  } catch (const std::exception& e) {
    v.push_back(path + "." + key + ": " + e.what());
  }
}

template <typename Enum, typename Parser>
void take_enum_list(const nlohmann::json& obj, const std::string& path, const char* key,
                    std::vector<Enum>& out, Parser&& parse, std::vector<std::string>& v) {
  if (!obj.is_object() || !obj.contains(key)) return;
  if (!obj.at(key).is_array()) {
    v.push_back(path + "." + key + ": wrong type (expected array of strings)");
    return;
  }
  std::vector<Enum> parsed;
  bool ok = true;
  for (const auto& item : obj.at(key)) {
    if (!item.is_string()) {
      v.push_back(path + "." + key + ": wrong type (expected array of strings)");
      ok = false;
      break;
    }
    try {
      parsed.push_back(parse(item.get<std::string>()));
    } catch (const std::exception& e) {
      v.push_back(path + "." + key + ": " + e.what());
      ok = false;
    }
  }
  if (ok) out = std::move(parsed);
}

// Structural pass: unknown keys, types, enum spellings. Domain constraints
// wait until flags have been applied on top.
inline RunConfig parse_structure(const nlohmann::json& j, std::vector<std::string>& v) {
  RunConfig rc;
  check_keys(j, "config",
             {"data", "split", "stage", "protocol", "output_root", "force", "guide_checkpoint",
              "sr_checkpoint", "dataset_out"},
             v);
  if (!j.is_object()) return rc;

  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, "data", {"dataset", "synthetic"}, v);
    if (d.is_object()) {
      take_path(d, "data", "dataset", rc.data.dataset, v);
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        check_keys(s, "data.synthetic",
                   {"per_class", "size", "seed", "speckle_looks", "pose_jitter"}, v);
        SyntheticSpec spec;
        take(s, "data.synthetic", "per_class", spec.per_class, v);
        take(s, "data.synthetic", "size", spec.size, v);
        take(s, "data.synthetic", "seed", spec.seed, v);
        take(s, "data.synthetic", "speckle_looks", spec.speckle_looks, v);
        take(s, "data.synthetic", "pose_jitter", spec.pose_jitter, v);
        rc.data.synthetic = spec;
      }
    }
  }

  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, "split", {"train_fraction", "seed", "stratified"}, v);
    take(s, "split", "train_fraction", rc.split.train_fraction, v);
    take(s, "split", "seed", rc.split.seed, v);
    take(s, "split", "stratified", rc.split.stratified, v);
  }

  if (j.contains("stage")) {
    const auto& s = j.at("stage");
    check_keys(s, "stage",
               {"loss", "sr_model", "classifier", "learning_rate", "epochs", "batch_size",
                "seed", "init_checkpoint", "joint_update"},
               v);
    if (s.is_object()) {
      if (s.contains("loss")) {
        const auto& l = s.at("loss");
        check_keys(l, "stage.loss", {"kind", "alpha", "beta", "hybrid_weights", "epsilon"}, v);
        take_enum(l, "stage.loss", "kind", rc.stage.loss.kind, loss_kind_from_string, v);
        take(l, "stage.loss", "alpha", rc.stage.loss.alpha, v);
        take(l, "stage.loss", "beta", rc.stage.loss.beta, v);
        take(l, "stage.loss", "hybrid_weights", rc.stage.loss.hybrid_weights, v);
        take(l, "stage.loss", "epsilon", rc.stage.loss.epsilon, v);
      }
      if (s.contains("sr_model")) {
        const auto& m = s.at("sr_model");
        check_keys(m, "stage.sr_model",
                   {"family", "scale", "channels", "blocks", "attention_reduction", "peak",
                    "identity_init"},
                   v);
        take_enum(m, "stage.sr_model", "family", rc.stage.sr_model.family,
                  sr_family_from_string, v);
        take(m, "stage.sr_model", "scale", rc.stage.sr_model.scale, v);
        take(m, "stage.sr_model", "channels", rc.stage.sr_model.channels, v);
        take(m, "stage.sr_model", "blocks", rc.stage.sr_model.blocks, v);
        take(m, "stage.sr_model", "attention_reduction", rc.stage.sr_model.attention_reduction,
             v);
        take(m, "stage.sr_model", "peak", rc.stage.sr_model.peak, v);
        take(m, "stage.sr_model", "identity_init", rc.stage.sr_model.identity_init, v);
      }
      if (s.contains("classifier")) {
        const auto& c = s.at("classifier");
        check_keys(c, "stage.classifier",
                   {"input_size", "base_channels", "max_channels", "head_hidden", "dropout"}, v);
        take(c, "stage.classifier", "input_size", rc.stage.classifier.input_size, v);
        take(c, "stage.classifier", "base_channels", rc.stage.classifier.base_channels, v);
        take(c, "stage.classifier", "max_channels", rc.stage.classifier.max_channels, v);
        take(c, "stage.classifier", "head_hidden", rc.stage.classifier.head_hidden, v);
        take(c, "stage.classifier", "dropout", rc.stage.classifier.dropout, v);
      }
      take(s, "stage", "learning_rate", rc.stage.learning_rate, v);
      take(s, "stage", "epochs", rc.stage.epochs, v);
      take(s, "stage", "batch_size", rc.stage.batch_size, v);
      take(s, "stage", "seed", rc.stage.seed, v);
      take_path(s, "stage", "init_checkpoint", rc.stage.init_checkpoint, v);
      take(s, "stage", "joint_update", rc.stage.joint_update, v);
    }
  }

  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    check_keys(p, "protocol", {"families", "losses", "error_map_count", "workers"}, v);
    take_enum_list(p, "protocol", "families", rc.families, sr_family_from_string, v);
    take_enum_list(p, "protocol", "losses", rc.losses, loss_kind_from_string, v);
    take(p, "protocol", "error_map_count", rc.error_map_count, v);
    take(p, "protocol", "workers", rc.workers, v);
  }

  if (j.contains("output_root")) {
    if (j.at("output_root").is_string())
      rc.output_root = std::filesystem::path(j.at("output_root").get<std::string>());
    else
      v.push_back("config.output_root: wrong type (expected string path)");
  }
  take(j, "config", "force", rc.force, v);
  take_path(j, "config", "guide_checkpoint", rc.guide_checkpoint, v);
  take_path(j, "config", "sr_checkpoint", rc.sr_checkpoint, v);
  take_path(j, "config", "dataset_out", rc.dataset_out, v);
  return rc;
}

}  // namespace detail

// Domain constraints over the final (post-override) config.
inline void check_semantics(const RunConfig& rc, std::vector<std::string>& v) {
  if (rc.data.dataset && rc.data.synthetic)
    v.push_back("data: set exactly one of dataset|synthetic");
  if (rc.data.synthetic) {
    try {
      rc.data.synthetic->validate();
    } catch (const std::exception& e) {
      v.push_back(std::string("data.synthetic: ") + e.what());
    }
  }
  try {
    rc.split.validate();
  } catch (const std::exception& e) {
    v.push_back(std::string("split: ") + e.what());
  }
  try {
    StageConfig probe = rc.stage;
    probe.stage = StageTag::SrPt;  // init-checkpoint presence is command-specific
    probe.init_checkpoint.reset();
    probe.validate();
  } catch (const std::exception& e) {
    v.push_back(std::string("stage: ") + e.what());
  }
  if (rc.families.empty()) v.push_back("protocol.families: must not be empty");
  for (std::size_t i = 0; i < rc.families.size(); ++i)
    for (std::size_t k = i + 1; k < rc.families.size(); ++k)
      if (rc.families[i] == rc.families[k])
        v.push_back("protocol.families: duplicate entry " + to_string(rc.families[i]));
  if (rc.losses.empty()) v.push_back("protocol.losses: must not be empty");
  for (std::size_t i = 0; i < rc.losses.size(); ++i)
    for (std::size_t k = i + 1; k < rc.losses.size(); ++k)
      if (rc.losses[i] == rc.losses[k])
        v.push_back("protocol.losses: duplicate entry " + to_string(rc.losses[i]));
  if (rc.error_map_count < 0) v.push_back("protocol.error_map_count: must be nonnegative");
  if (rc.workers < 1) v.push_back("protocol.workers: must be at least 1");
}

inline void throw_if_violations(const std::vector<std::string>& v) {
  if (v.empty()) return;
  std::string msg = "invalid configuration (" + std::to_string(v.size()) + " violation" +
                    (v.size() == 1 ? "" : "s") + "):";
  for (const auto& item : v) msg += "\n  - " + item;
  throw ValidationError(msg);
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  std::vector<std::string> violations;
  RunConfig rc = detail::parse_structure(j, violations);
  check_semantics(rc, violations);
  throw_if_violations(violations);
  return rc;
}

// Fully expanded (defaults included) document; re-parsing reproduces rc.
inline nlohmann::json to_json(const RunConfig& rc) {
  nlohmann::json data;
  if (rc.data.dataset) data["dataset"] = rc.data.dataset->string();
  const SyntheticSpec spec = rc.data.synthetic.value_or(SyntheticSpec{});
  if (rc.data.synthetic || !rc.data.dataset)
    data["synthetic"] = {{"per_class", spec.per_class},
                         {"size", spec.size},
                         {"seed", spec.seed},
                         {"speckle_looks", spec.speckle_looks},
                         {"pose_jitter", spec.pose_jitter}};

  nlohmann::json families = nlohmann::json::array();
  for (SrFamily f : rc.families) families.push_back(to_string(f));
  nlohmann::json losses = nlohmann::json::array();
  for (LossKind l : rc.losses) losses.push_back(to_string(l));

  nlohmann::json stage{{"loss",
                        {{"kind", to_string(rc.stage.loss.kind)},
                         {"alpha", rc.stage.loss.alpha},
                         {"beta", rc.stage.loss.beta},
                         {"hybrid_weights", rc.stage.loss.hybrid_weights},
                         {"epsilon", rc.stage.loss.epsilon}}},
                       {"sr_model", to_json(rc.stage.sr_model)},
                       {"classifier", to_json(rc.stage.classifier)},
                       {"learning_rate", rc.stage.learning_rate},
                       {"epochs", rc.stage.epochs},
                       {"batch_size", rc.stage.batch_size},
                       {"seed", rc.stage.seed},
                       {"joint_update", rc.stage.joint_update}};
  if (rc.stage.init_checkpoint) stage["init_checkpoint"] = rc.stage.init_checkpoint->string();

  nlohmann::json j{{"data", data},
                   {"split",
                    {{"train_fraction", rc.split.train_fraction},
                     {"seed", rc.split.seed},
                     {"stratified", rc.split.stratified}}},
                   {"stage", stage},
                   {"protocol",
                    {{"families", families},
                     {"losses", losses},
                     {"error_map_count", rc.error_map_count},
                     {"workers", rc.workers}}},
                   {"output_root", rc.output_root.string()},
                   {"force", rc.force}};
  if (rc.guide_checkpoint) j["guide_checkpoint"] = rc.guide_checkpoint->string();
  if (rc.sr_checkpoint) j["sr_checkpoint"] = rc.sr_checkpoint->string();
  if (rc.dataset_out) j["dataset_out"] = rc.dataset_out->string();
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("config file is not valid JSON: " + path.string() + " (" + e.what() +
                         ")");
  }
  return run_config_from_json(j);
}

// Run directories are named by a hash of the resolved config, so identical
// configurations land in the same directory (and protocol reruns can skip
// completed cells).
inline std::string config_hash(const RunConfig& rc, const std::string& command) {
  const std::string canon = command + ":" + to_json(rc).dump();
  return hex64(fnv1a64(canon.data(), canon.size())).substr(0, 12);
}

}  // namespace casr
