#pragma once
// Self-describing JSON checkpoints: model config, seed, stage provenance tag,
// and the full parameter snapshot (raw little-endian bytes, base64). A digest
// over names+bytes guards against silent corruption; loading validates
// format, version, dtype, topology, and digest.

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "casr/models.hpp"

namespace casr {

inline constexpr int kCheckpointVersion = 1;

enum class StageTag { SrI, SrPt, SrFt, Classifier };

inline std::string to_string(StageTag s) {
  switch (s) {
    case StageTag::SrI: return "SR-I";
    case StageTag::SrPt: return "SR-PT";
    case StageTag::SrFt: return "SR-FT";
    case StageTag::Classifier: return "CLS";
  }
  throw DomainError("to_string(StageTag): unknown value");
}

inline StageTag stage_tag_from_string(const std::string& s) {
  if (s == "SR-I") return StageTag::SrI;
  if (s == "SR-PT") return StageTag::SrPt;
  if (s == "SR-FT") return StageTag::SrFt;
  if (s == "CLS") return StageTag::Classifier;
  throw CheckpointError("unknown stage tag '" + s + "'");
}

template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

// --- config <-> json ---------------------------------------------------------
inline nlohmann::json to_json(const SrModelConfig& c) {
  return {{"family", to_string(c.family)}, {"scale", c.scale},
          {"channels", c.channels},        {"blocks", c.blocks},
          {"attention_reduction", c.attention_reduction},
          {"peak", c.peak},                {"identity_init", c.identity_init}};
}

inline SrModelConfig sr_config_from_json(const nlohmann::json& j) {
  SrModelConfig c;
  c.family = sr_family_from_string(j.at("family").get<std::string>());
  c.scale = j.at("scale").get<int>();
  c.channels = j.at("channels").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.attention_reduction = j.at("attention_reduction").get<int>();
  c.peak = j.at("peak").get<double>();
  c.identity_init = j.value("identity_init", false);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ClassifierConfig& c) {
  return {{"input_size", c.input_size},   {"base_channels", c.base_channels},
          {"max_channels", c.max_channels}, {"head_hidden", c.head_hidden},
          {"dropout", c.dropout}};
}

inline ClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.max_channels = j.at("max_channels").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

// --- snapshot <-> json -------------------------------------------------------
template <typename T>
nlohmann::json snapshot_to_json(const ParameterSnapshot<T>& snap) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, tensor] : snap) {
    params[name] = {{"shape", tensor.shape},
                    {"data", base64_encode(tensor.v.data(), tensor.v.size() * sizeof(T))}};
  }
  return params;
}

template <typename T>
ParameterSnapshot<T> snapshot_from_json(const nlohmann::json& j) {
  ParameterSnapshot<T> snap;
  for (const auto& [name, entry] : j.items()) {
    Tensor<T> t(entry.at("shape").template get<std::vector<int>>());
    const auto bytes = base64_decode(entry.at("data").template get<std::string>());
    if (bytes.size() != t.v.size() * sizeof(T))
      throw CheckpointError("checkpoint: byte count mismatch for parameter " + name);
    std::memcpy(t.v.data(), bytes.data(), bytes.size());
    snap[name] = std::move(t);
  }
  return snap;
}

// --- checkpoint containers ---------------------------------------------------
template <typename T>
struct SrCheckpoint {
  StageTag stage = StageTag::SrI;
  SrModelConfig config{};
  std::uint64_t seed = 0;
  ParameterSnapshot<T> params;
};

template <typename T>
struct ClassifierCheckpoint {
  ClassifierConfig config{};
  std::uint64_t seed = 0;
  ParameterSnapshot<T> params;
};

namespace detail {

template <typename T>
nlohmann::json checkpoint_envelope(const char* kind, StageTag stage, std::uint64_t seed,
                                   nlohmann::json config, const ParameterSnapshot<T>& params) {
  nlohmann::json j;
  j["format"] = "casr-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = kind;
  j["stage"] = to_string(stage);
  j["dtype"] = dtype_name<T>();
  j["seed"] = seed;
  j["config"] = std::move(config);
  j["params"] = snapshot_to_json(params);
  j["digest"] = "fnv1a:" + hex64(snapshot_digest(params));
  return j;
}

inline nlohmann::json read_checkpoint_file(const std::filesystem::path& path, const char* kind) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "casr-checkpoint")
    throw CheckpointError(path.string() + ": not a casr checkpoint");
  if (j.value("version", -1) != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version");
  if (j.value("kind", "") != kind)
    throw CheckpointError(path.string() + ": expected a " + std::string(kind) + " checkpoint, got '" +
                          j.value("kind", "?") + "'");
  return j;
}

template <typename T>
ParameterSnapshot<T> read_params_checked(const nlohmann::json& j, const std::string& where) {
  if (j.value("dtype", "") != dtype_name<T>())
    throw CheckpointError(where + ": dtype mismatch (checkpoint holds " + j.value("dtype", "?") +
                          ", loader expects " + dtype_name<T>() + ")");
  auto params = snapshot_from_json<T>(j.at("params"));
  const std::string want = "fnv1a:" + hex64(snapshot_digest(params));
  if (j.value("digest", "") != want)
    throw CheckpointError(where + ": digest mismatch, checkpoint is corrupt");
  return params;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const SrCheckpoint<T>& ckpt, const std::filesystem::path& path) {
  auto j = detail::checkpoint_envelope<T>("sr", ckpt.stage, ckpt.seed, to_json(ckpt.config),
                                          ckpt.params);
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint file " + path.string());
  out << j.dump(2) << '\n';
}

template <typename T>
void save_checkpoint(const ClassifierCheckpoint<T>& ckpt, const std::filesystem::path& path) {
  auto j = detail::checkpoint_envelope<T>("classifier", StageTag::Classifier, ckpt.seed,
                                          to_json(ckpt.config), ckpt.params);
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint file " + path.string());
  out << j.dump(2) << '\n';
}

template <typename T>
SrCheckpoint<T> load_sr_checkpoint(const std::filesystem::path& path) {
  const auto j = detail::read_checkpoint_file(path, "sr");
  SrCheckpoint<T> ckpt;
  ckpt.stage = stage_tag_from_string(j.at("stage").get<std::string>());
  ckpt.config = sr_config_from_json(j.at("config"));
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.params = detail::read_params_checked<T>(j, path.string());
  return ckpt;
}

template <typename T>
ClassifierCheckpoint<T> load_classifier_checkpoint(const std::filesystem::path& path) {
  const auto j = detail::read_checkpoint_file(path, "classifier");
  ClassifierCheckpoint<T> ckpt;
  ckpt.config = classifier_config_from_json(j.at("config"));
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.params = detail::read_params_checked<T>(j, path.string());
  return ckpt;
}

// Instantiates the model a checkpoint describes and loads its weights.
// Topology mismatches between config and snapshot surface as CheckpointError.
template <typename T>
SrModel<T> make_sr_model(const SrCheckpoint<T>& ckpt) {
  SrModel<T> model(ckpt.config, ckpt.seed);
  auto params = model.params();
  load_snapshot(params, ckpt.params);
  return model;
}

template <typename T>
Classifier<T> make_classifier(const ClassifierCheckpoint<T>& ckpt) {
  Classifier<T> model(ckpt.config, ckpt.seed);
  auto params = model.params();
  load_snapshot(params, ckpt.params);
  return model;
}

}  // namespace casr
