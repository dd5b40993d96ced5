#pragma once
// Stage orchestration: SR-I inference, SR-PT image-quality pretraining,
// SR-FT classification-guided fine-tuning, classifier training, and the
// full evaluation protocol that strings them together.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casr/checkpoint.hpp"
#include "casr/data.hpp"
#include "casr/losses.hpp"
#include "casr/metrics.hpp"
#include "casr/models.hpp"
#include "casr/nn.hpp"

namespace casr {

// ---------------------------------------------------------------------------
// Configuration and logs.
// ---------------------------------------------------------------------------

struct StageConfig {
  StageTag stage = StageTag::SrPt;
  LossSpec loss{};
  SrModelConfig sr_model{};
  ClassifierConfig classifier{};
  double learning_rate = 1e-4;
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> init_checkpoint;
  // When set, the guide classifier receives optimizer updates during SR-FT
  // steps instead of staying frozen.
  bool joint_update = false;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    loss.validate();
    sr_model.validate();
    classifier.validate();
    if (stage == StageTag::SrFt && !init_checkpoint.has_value())
      throw ConfigError("init_checkpoint: fine-tuning requires a pretraining checkpoint");
  }
};

struct StepRecord {
  int epoch = 0;
  int step = 0;  // global 1-based optimizer step
  double total = 0.0;
  std::map<std::string, double> components;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean step total within the epoch
  double val_loss = 0.0;
  MetricReport val_metrics{};
  std::uint64_t shuffle_seed = 0;
  bool best = false;
  double seconds = 0.0;
};

struct TrainLog {
  std::string stage;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 until training completes

  void clear() {
    stage.clear();
    steps.clear();
    epochs.clear();
    best_epoch = 0;
  }

  // One JSON object per line: step records, epoch records, then a summary.
  void write_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write training log " + path.string());
    for (const auto& s : steps) {
      nlohmann::json j{{"kind", "step"}, {"epoch", s.epoch}, {"step", s.step}, {"total", s.total}};
      j["components"] = s.components;
      out << j.dump() << "\n";
    }
    for (const auto& e : epochs) {
      nlohmann::json j{{"kind", "epoch"},       {"epoch", e.epoch},
                       {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                       {"shuffle_seed", hex64(e.shuffle_seed)}, {"best", e.best},
                       {"seconds", e.seconds}};
      if (e.val_metrics.has_iq) {
        j["psnr_db"] = e.val_metrics.psnr_db;
        j["ssim"] = e.val_metrics.ssim;
      }
      if (e.val_metrics.has_cls) j["macro_f1"] = e.val_metrics.f1.macro;
      out << j.dump() << "\n";
    }
    nlohmann::json j{{"kind", "summary"},
                     {"stage", stage},
                     {"best_epoch", best_epoch},
                     {"steps", steps.size()},
                     {"epochs", epochs.size()}};
    out << j.dump() << "\n";
  }
};

// ---------------------------------------------------------------------------
// Shared internals.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, int batch_size,
                                                              std::uint64_t shuffle_seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(idx);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, at + static_cast<std::size_t>(batch_size));
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(at),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

template <typename T>
void gather_pair_batch(const std::vector<PairedSample<T>>& pairs,
                       const std::vector<std::size_t>& idx, std::vector<Image<T>>& lr,
                       std::vector<Image<T>>& hr) {
  lr.clear();
  hr.clear();
  lr.reserve(idx.size());
  hr.reserve(idx.size());
  for (std::size_t i : idx) {
    lr.push_back(pairs[i].lr);
    hr.push_back(pairs[i].hr);
  }
}

template <typename T>
void check_step_finite(const LossValue& lv, const char* stage, int epoch, int step) {
  if (!std::isfinite(lv.total))
    throw NumericError(std::string(stage) + ": non-finite loss at epoch " +
                       std::to_string(epoch) + " step " + std::to_string(step) +
                       " (recorded in the training log)");
}

inline double elapsed_seconds(std::chrono::steady_clock::time_point from) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

}  // namespace detail

// Runs the SR model over a pair list in mini-batches, collecting SR images.
template <typename T>
std::vector<Image<T>> super_resolve(SrModel<T>& model, const std::vector<PairedSample<T>>& pairs,
                                    int batch_size = 64) {
  if (pairs.empty()) throw DomainError("super_resolve: empty pair list");
  if (batch_size < 1) throw ConfigError("super_resolve: batch_size must be at least 1");
  std::vector<Image<T>> out;
  out.reserve(pairs.size());
  const T peak = pairs[0].hr.peak;
  std::vector<Image<T>> lr, hr;
  for (std::size_t at = 0; at < pairs.size(); at += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = at; i < std::min(pairs.size(), at + static_cast<std::size_t>(batch_size)); ++i)
      idx.push_back(i);
    detail::gather_pair_batch(pairs, idx, lr, hr);
    Tensor<T> y = model.forward(batch_to_tensor<T>(lr));
    for (auto& img : tensor_to_batch(y, peak)) out.push_back(std::move(img));
  }
  return out;
}

// SR images of a pair list re-labeled for classifier consumption.
template <typename T>
std::vector<LabeledSample<T>> sr_outputs_as_samples(SrModel<T>& model,
                                                    const std::vector<PairedSample<T>>& pairs,
                                                    int batch_size = 64) {
  auto sr = super_resolve(model, pairs, batch_size);
  std::vector<LabeledSample<T>> out;
  out.reserve(sr.size());
  for (std::size_t i = 0; i < sr.size(); ++i) {
    LabeledSample<T> s;
    s.image = std::move(sr[i]);
    s.label = pairs[i].label;
    s.lineage = "sr";
    s.source = pairs[i].source;
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
std::vector<LabeledSample<T>> pairs_as_samples(const std::vector<PairedSample<T>>& pairs,
                                               bool low_res) {
  std::vector<LabeledSample<T>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    LabeledSample<T> s;
    s.image = low_res ? p.lr : p.hr;
    s.label = p.label;
    s.lineage = low_res ? "lr" : "hr";
    s.source = p.source;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SR-I: inference only, no parameter updates.
// ---------------------------------------------------------------------------

template <typename T>
struct InferenceOutput {
  std::vector<Image<T>> sr;
  MetricReport report;
};

template <typename T>
InferenceOutput<T> run_sr_inference(const StageConfig& cfg,
                                    const std::vector<PairedSample<T>>& pairs,
                                    const SrCheckpoint<T>* init = nullptr) {
  cfg.validate();
  if (cfg.stage != StageTag::SrI) throw ConfigError("run_sr_inference requires stage SR-I");
  if (pairs.empty()) throw DomainError("run_sr_inference: empty pair list");
  SrModel<T> model = init ? make_sr_model(*init) : SrModel<T>(cfg.sr_model, cfg.seed);
  InferenceOutput<T> out;
  out.sr = super_resolve(model, pairs, cfg.batch_size);
  std::vector<Image<T>> hr;
  hr.reserve(pairs.size());
  for (const auto& p : pairs) hr.push_back(p.hr);
  out.report = iq_report<T>(out.sr, hr);
  return out;
}

// ---------------------------------------------------------------------------
// SR-PT: image-quality pretraining.
// ---------------------------------------------------------------------------

namespace detail {

// Whole-split criterion value plus PSNR/SSIM, forwarding in mini-batches.
template <typename T>
std::pair<double, MetricReport> evaluate_sr_split(SrModel<T>& model, const LossSpec& loss,
                                                  const std::vector<PairedSample<T>>& pairs,
                                                  int batch_size) {
  auto sr = super_resolve(model, pairs, batch_size);
  std::vector<Image<T>> hr;
  hr.reserve(pairs.size());
  for (const auto& p : pairs) hr.push_back(p.hr);
  const LossValue lv = evaluate_sr_loss<T>(loss, sr, hr, nullptr);
  return {lv.total, iq_report<T>(sr, hr)};
}

}  // namespace detail

template <typename T>
SrCheckpoint<T> run_sr_pretrain(const StageConfig& cfg, const std::vector<PairedSample<T>>& train,
                                const std::vector<PairedSample<T>>& val, TrainLog& log) {
  cfg.validate();
  if (cfg.stage != StageTag::SrPt) throw ConfigError("run_sr_pretrain requires stage SR-PT");
  if (train.empty()) throw TrainingError("run_sr_pretrain: empty training split");
  if (val.empty()) throw TrainingError("run_sr_pretrain: empty validation split");

  log.clear();
  log.stage = to_string(StageTag::SrPt);
  SrModel<T> model(cfg.sr_model, cfg.seed);
  auto params = model.params();
  Adam<T> opt(cfg.learning_rate);
  const T peak = train[0].hr.peak;

  ParameterSnapshot<T> best_params = take_snapshot(params);
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int global_step = 0;
  std::vector<Image<T>> lr, hr, grads;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t shuffle_seed =
        sub_seed(cfg.seed, "epoch-shuffle-" + std::to_string(epoch));
    double train_acc = 0.0;
    int batches_done = 0;
    for (const auto& idx : detail::shuffled_batches(train.size(), cfg.batch_size, shuffle_seed)) {
      detail::gather_pair_batch(train, idx, lr, hr);
      zero_grads(params);
      Tensor<T> y = model.forward(batch_to_tensor<T>(lr));
      auto sr = tensor_to_batch(y, peak);
      const LossValue lv = evaluate_sr_loss<T>(cfg.loss, sr, hr, &grads);
      ++global_step;
      log.steps.push_back({epoch, global_step, lv.total, lv.components});
      detail::check_step_finite<T>(lv, "SR-PT", epoch, global_step);
      model.backward(batch_to_tensor<T>(grads));
      opt.step(params);
      train_acc += lv.total;
      ++batches_done;
    }
    auto [val_loss, val_metrics] = detail::evaluate_sr_split(model, cfg.loss, val, cfg.batch_size);
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = train_acc / batches_done;
    er.val_loss = val_loss;
    er.val_metrics = val_metrics;
    er.shuffle_seed = shuffle_seed;
    er.seconds = detail::elapsed_seconds(t0);
    log.epochs.push_back(er);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_params = take_snapshot(params);
    }
  }
  log.best_epoch = best_epoch;
  log.epochs[static_cast<std::size_t>(best_epoch - 1)].best = true;

  SrCheckpoint<T> ckpt;
  ckpt.stage = StageTag::SrPt;
  ckpt.config = cfg.sr_model;
  ckpt.seed = cfg.seed;
  ckpt.params = std::move(best_params);
  return ckpt;
}

// ---------------------------------------------------------------------------
// SR-FT: merged-loss fine-tuning guided by a frozen HR-trained classifier.
// ---------------------------------------------------------------------------

template <typename T>
SrCheckpoint<T> run_sr_finetune(const StageConfig& cfg, const std::vector<PairedSample<T>>& train,
                                const std::vector<PairedSample<T>>& val,
                                Classifier<T>& guide_classifier, const SrCheckpoint<T>& init,
                                TrainLog& log) {
  cfg.validate();
  if (cfg.stage != StageTag::SrFt) throw ConfigError("run_sr_finetune requires stage SR-FT");
  if (train.empty()) throw TrainingError("run_sr_finetune: empty training split");
  if (val.empty()) throw TrainingError("run_sr_finetune: empty validation split");
  // Provenance chain: only an SR-PT checkpoint may seed fine-tuning.
  if (init.stage != StageTag::SrPt)
    throw CheckpointError("run_sr_finetune: init checkpoint is tagged " + to_string(init.stage) +
                          ", expected " + to_string(StageTag::SrPt));
  if (to_json(init.config) != to_json(cfg.sr_model))
    throw CheckpointError("run_sr_finetune: init checkpoint topology differs from sr_model config");

  log.clear();
  log.stage = to_string(StageTag::SrFt);
  SrModel<T> model = make_sr_model(init);
  auto params = model.params();
  auto guide_params = guide_classifier.params();
  Adam<T> opt(cfg.learning_rate);
  std::optional<Adam<T>> guide_opt;
  if (cfg.joint_update) guide_opt.emplace(cfg.learning_rate);
  const T peak = train[0].hr.peak;

  // Merged criterion over one forwarded batch; fills pixel gradients when asked.
  const auto merged_on_batch = [&](const std::vector<Image<T>>& sr_images,
                                   const std::vector<Image<T>>& hr_images,
                                   std::vector<Image<T>>* sr_grads,
                                   Tensor<T>* guide_input_grad) -> LossValue {
    const LossValue sr_lv = evaluate_sr_loss<T>(cfg.loss, sr_images, hr_images, sr_grads);
    const Tensor<T> out_hr = guide_classifier.forward(batch_to_tensor<T>(hr_images));
    const Tensor<T> out_sr = guide_classifier.forward(batch_to_tensor<T>(sr_images));
    Tensor<T> glogits;
    const LossValue cls_lv =
        classification_loss(out_sr, out_hr, guide_input_grad ? &glogits : nullptr);
    if (guide_input_grad) {
      zero_grads(guide_params);
      *guide_input_grad = guide_classifier.backward(glogits);
    }
    return merged_loss(sr_lv, cls_lv);
  };

  ParameterSnapshot<T> best_params = take_snapshot(params);
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int global_step = 0;
  std::vector<Image<T>> lr, hr, grads;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t shuffle_seed =
        sub_seed(cfg.seed, "epoch-shuffle-" + std::to_string(epoch));
    double train_acc = 0.0;
    int batches_done = 0;
    for (const auto& idx : detail::shuffled_batches(train.size(), cfg.batch_size, shuffle_seed)) {
      detail::gather_pair_batch(train, idx, lr, hr);
      zero_grads(params);
      Tensor<T> y = model.forward(batch_to_tensor<T>(lr));
      auto sr = tensor_to_batch(y, peak);
      Tensor<T> guide_grad;
      const LossValue lv = merged_on_batch(sr, hr, &grads, &guide_grad);
      ++global_step;
      log.steps.push_back({epoch, global_step, lv.total, lv.components});
      detail::check_step_finite<T>(lv, "SR-FT", epoch, global_step);
      Tensor<T> gy = batch_to_tensor<T>(grads);
      for (std::size_t i = 0; i < gy.v.size(); ++i) gy.v[i] += guide_grad.v[i];
      model.backward(gy);
      opt.step(params);
      if (guide_opt) guide_opt->step(guide_params);
      train_acc += lv.total;
      ++batches_done;
    }

    // Validation: merged criterion plus IQ metrics, no gradients.
    auto val_sr = super_resolve(model, val, cfg.batch_size);
    std::vector<Image<T>> val_hr;
    val_hr.reserve(val.size());
    for (const auto& p : val) val_hr.push_back(p.hr);
    const LossValue val_lv = merged_on_batch(val_sr, val_hr, nullptr, nullptr);

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = train_acc / batches_done;
    er.val_loss = val_lv.total;
    er.val_metrics = iq_report<T>(val_sr, val_hr);
    er.shuffle_seed = shuffle_seed;
    er.seconds = detail::elapsed_seconds(t0);
    log.epochs.push_back(er);
    if (val_lv.total < best_val) {
      best_val = val_lv.total;
      best_epoch = epoch;
      best_params = take_snapshot(params);
    }
  }
  log.best_epoch = best_epoch;
  log.epochs[static_cast<std::size_t>(best_epoch - 1)].best = true;

  SrCheckpoint<T> ckpt;
  ckpt.stage = StageTag::SrFt;
  ckpt.config = cfg.sr_model;
  ckpt.seed = cfg.seed;
  ckpt.params = std::move(best_params);
  return ckpt;
}

// ---------------------------------------------------------------------------
// Classifier training (guide and per-stage evaluation classifiers).
// ---------------------------------------------------------------------------

template <typename T>
struct ClassifierTrainOutput {
  ClassifierCheckpoint<T> checkpoint;
  MetricReport report;  // validation report at the best epoch
};

template <typename T>
ClassifierTrainOutput<T> train_classifier(const StageConfig& cfg,
                                          const std::vector<LabeledSample<T>>& train,
                                          const std::vector<LabeledSample<T>>& val, TrainLog& log,
                                          const std::string& expected_lineage = "") {
  cfg.validate();
  if (train.empty()) throw TrainingError("train_classifier: empty training split");
  if (val.empty()) throw TrainingError("train_classifier: empty validation split");
  // Lineage guard: an evaluation classifier must see only its stage's outputs.
  if (!expected_lineage.empty())
    for (const auto& s : train)
      if (s.lineage != expected_lineage)
        throw TrainingError("train_classifier: sample " + s.source + " has lineage '" +
                            s.lineage + "', expected '" + expected_lineage + "'");
  std::array<int, kNumClasses> counts{};
  for (const auto& s : train) {
    if (s.label < 0 || s.label >= kNumClasses)
      throw DomainError("train_classifier: label out of range");
    ++counts[static_cast<std::size_t>(s.label)];
  }
  for (int c = 0; c < kNumClasses; ++c)
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw TrainingError("train_classifier: class " +
                          class_names()[static_cast<std::size_t>(c)] +
                          " absent from the training split");

  log.clear();
  log.stage = to_string(StageTag::Classifier);
  Classifier<T> model(cfg.classifier, cfg.seed);
  auto params = model.params();
  Adam<T> opt(cfg.learning_rate);
  Rng dropout_rng(sub_seed(cfg.seed, "dropout"));

  std::vector<int> val_labels;
  std::vector<Image<T>> val_images;
  val_labels.reserve(val.size());
  val_images.reserve(val.size());
  for (const auto& s : val) {
    val_labels.push_back(s.label);
    val_images.push_back(s.image);
  }

  ParameterSnapshot<T> best_params = take_snapshot(params);
  double best_val = std::numeric_limits<double>::infinity();
  MetricReport best_report;
  int best_epoch = 0;
  int global_step = 0;
  std::vector<Image<T>> batch_images;
  std::vector<int> batch_labels;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t shuffle_seed =
        sub_seed(cfg.seed, "epoch-shuffle-" + std::to_string(epoch));
    double train_acc = 0.0;
    int batches_done = 0;
    for (const auto& idx : detail::shuffled_batches(train.size(), cfg.batch_size, shuffle_seed)) {
      batch_images.clear();
      batch_labels.clear();
      for (std::size_t i : idx) {
        batch_images.push_back(train[i].image);
        batch_labels.push_back(train[i].label);
      }
      zero_grads(params);
      Tensor<T> logits =
          model.forward(batch_to_tensor<T>(batch_images), /*train=*/true, &dropout_rng);
      Tensor<T> glogits;
      const double ce = softmax_cross_entropy(logits, batch_labels, &glogits);
      ++global_step;
      LossValue lv;
      lv.total = ce;
      lv.components["cross_entropy"] = ce;
      log.steps.push_back({epoch, global_step, lv.total, lv.components});
      detail::check_step_finite<T>(lv, "CLS", epoch, global_step);
      model.backward(glogits);
      opt.step(params);
      train_acc += ce;
      ++batches_done;
    }

    // Validation: cross-entropy for model selection, macro-F1 for reporting.
    double val_loss = 0.0;
    std::vector<int> preds;
    preds.reserve(val.size());
    for (std::size_t at = 0; at < val.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(val.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Image<T>> chunk(val_images.begin() + static_cast<std::ptrdiff_t>(at),
                                  val_images.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels(val_labels.begin() + static_cast<std::ptrdiff_t>(at),
                              val_labels.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor<T> logits = model.forward(batch_to_tensor<T>(chunk));
      val_loss += softmax_cross_entropy(logits, labels) * static_cast<double>(labels.size());
      for (int i = 0; i < logits.dim(0); ++i) {
        const T* row = logits.data() + static_cast<std::size_t>(i) * logits.dim(1);
        int arg = 0;
        for (int j = 1; j < logits.dim(1); ++j)
          if (row[j] > row[arg]) arg = j;
        preds.push_back(arg);
      }
    }
    val_loss /= static_cast<double>(val.size());
    const MetricReport val_report = cls_report(preds, val_labels);

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = train_acc / batches_done;
    er.val_loss = val_loss;
    er.val_metrics = val_report;
    er.shuffle_seed = shuffle_seed;
    er.seconds = detail::elapsed_seconds(t0);
    log.epochs.push_back(er);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_params = take_snapshot(params);
      best_report = val_report;
    }
  }
  log.best_epoch = best_epoch;
  log.epochs[static_cast<std::size_t>(best_epoch - 1)].best = true;

  ClassifierTrainOutput<T> out;
  out.checkpoint.config = cfg.classifier;
  out.checkpoint.seed = cfg.seed;
  out.checkpoint.params = std::move(best_params);
  out.report = best_report;
  return out;
}

}  // namespace casr
