#pragma once
// Subcommand implementations shared by the casr binary and the CLI tests.
// Every command validates its full configuration before any compute, writes
// the resolved config into a hash-named run directory, and returns a process
// exit code (0 iff all requested work succeeded).

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "casr/config.hpp"
#include "casr/png_io.hpp"

namespace casr::cli {

namespace fs = std::filesystem;

inline fs::path resolve_output_root(const RunConfig& rc) {
  if (const char* env = std::getenv("CASR_OUTPUT_ROOT"); env && *env) return fs::path(env);
  return rc.output_root;
}

inline fs::path prepare_run_dir(const RunConfig& rc, const std::string& command) {
  const fs::path dir = resolve_output_root(rc) / (command + "-" + config_hash(rc, command));
  fs::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw IngestionError("cannot write resolved config in " + dir.string());
  out << to_json(rc).dump(2) << "\n";
  return dir;
}

inline std::vector<LabeledSample<float>> load_samples(const RunConfig& rc, std::ostream& err) {
  if (rc.data.dataset) {
    const LoadResult loaded =
        load_dataset(*rc.data.dataset, rc.stage.classifier.input_size);
    for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
    std::vector<LabeledSample<float>> out;
    out.reserve(loaded.samples.size());
    for (const auto& s : loaded.samples)
      out.push_back({image_cast<float>(s.image), s.label, s.lineage, s.source});
    return out;
  }
  return generate_synthetic<float>(rc.data.synthetic.value_or(SyntheticSpec{}));
}

inline std::size_t resolved_steps(std::size_t n_train, const StageConfig& cfg) {
  const auto per_epoch = (n_train + static_cast<std::size_t>(cfg.batch_size) - 1) /
                         static_cast<std::size_t>(cfg.batch_size);
  return static_cast<std::size_t>(cfg.epochs) * per_epoch;
}

inline void write_metric_report(const MetricReport& m, const fs::path& path) {
  nlohmann::json j;
  if (m.has_iq) {
    j["psnr_db"] = m.psnr_db;
    j["ssim"] = m.ssim;
  }
  if (m.has_cls) {
    j["macro_f1"] = m.f1.macro;
    j["per_class_f1"] = m.f1.per_class;
    j["confusion"] = m.confusion;
  }
  j["samples"] = m.sample_count;
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write report: " + path.string());
  out << j.dump(2) << "\n";
}

inline int cmd_generate(const RunConfig& rc, bool dry_run, std::ostream& out,
                        std::ostream& err) {
  const SyntheticSpec spec = rc.data.synthetic.value_or(SyntheticSpec{});
  const int total = spec.per_class * kNumClasses;
  if (dry_run) {
    out << "generate (dry run): would write " << total << " images (" << spec.per_class
        << " per class, " << spec.size << "x" << spec.size << ", seed " << spec.seed << ")\n";
    return 0;
  }
  const fs::path run_dir = prepare_run_dir(rc, "generate");
  const fs::path target = rc.dataset_out.value_or(run_dir / "dataset");
  auto samples = generate_synthetic<float>(spec);
  export_dataset(samples, target,
                 nlohmann::json{{"per_class", spec.per_class},
                                {"size", spec.size},
                                {"seed", spec.seed},
                                {"speckle_looks", spec.speckle_looks},
                                {"pose_jitter", spec.pose_jitter}},
                 rc.force);
  (void)err;
  out << "generate: wrote " << total << " images to " << target.string() << "\n";
  return 0;
}

inline int cmd_train_classifier(const RunConfig& rc, bool dry_run, std::ostream& out,
                                std::ostream& err) {
  auto samples = load_samples(rc, err);
  auto split = split_dataset(samples, rc.split);
  StageConfig cfg = rc.stage;
  cfg.stage = StageTag::Classifier;
  cfg.init_checkpoint.reset();
  if (dry_run) {
    out << "train-classifier (dry run): " << split.train.size() << " train / "
        << split.test.size() << " val samples, " << cfg.epochs << " epochs, "
        << resolved_steps(split.train.size(), cfg) << " steps\n";
    return 0;
  }
  const fs::path run_dir = prepare_run_dir(rc, "train-classifier");
  TrainLog log;
  auto result = train_classifier(cfg, split.train, split.test, log, "hr");
  log.write_jsonl(run_dir / "train.log.jsonl");
  save_checkpoint(result.checkpoint, run_dir / "classifier.ckpt.json");
  write_metric_report(result.report, run_dir / "report.json");
  out << "train-classifier: best epoch " << log.best_epoch << ", macro-F1 "
      << result.report.f1.macro << "\n"
      << "train-classifier: artifacts in " << run_dir.string() << "\n";
  return 0;
}

inline int cmd_pretrain(const RunConfig& rc, bool dry_run, std::ostream& out,
                        std::ostream& err) {
  auto samples = load_samples(rc, err);
  auto split = split_dataset(samples, rc.split);
  auto train_pairs = make_pairs(split.train);
  auto val_pairs = make_pairs(split.test);
  StageConfig cfg = rc.stage;
  cfg.stage = StageTag::SrPt;
  cfg.init_checkpoint.reset();
  if (dry_run) {
    out << "pretrain (dry run): " << train_pairs.size() << " train / " << val_pairs.size()
        << " val pairs, " << cfg.epochs << " epochs, "
        << resolved_steps(train_pairs.size(), cfg) << " steps\n";
    return 0;
  }
  const fs::path run_dir = prepare_run_dir(rc, "pretrain");
  TrainLog log;
  auto ckpt = run_sr_pretrain(cfg, train_pairs, val_pairs, log);
  log.write_jsonl(run_dir / "train.log.jsonl");
  save_checkpoint(ckpt, run_dir / "sr_pt.ckpt.json");
  const auto& best = log.epochs.at(static_cast<std::size_t>(log.best_epoch - 1));
  out << "pretrain: best epoch " << log.best_epoch << ", val loss " << best.val_loss
      << ", PSNR " << best.val_metrics.psnr_db << " dB, SSIM " << best.val_metrics.ssim << "\n"
      << "pretrain: artifacts in " << run_dir.string() << "\n";
  return 0;
}

inline int cmd_finetune(const RunConfig& rc, bool dry_run, std::ostream& out,
                        std::ostream& err) {
  {
    std::vector<std::string> v;
    if (!rc.stage.init_checkpoint)
      v.push_back("stage.init_checkpoint: required for finetune (an SR-PT checkpoint)");
    if (!rc.guide_checkpoint)
      v.push_back("guide_checkpoint: required for finetune (an HR-trained classifier)");
    throw_if_violations(v);
  }
  auto samples = load_samples(rc, err);
  auto split = split_dataset(samples, rc.split);
  auto train_pairs = make_pairs(split.train);
  auto val_pairs = make_pairs(split.test);
  StageConfig cfg = rc.stage;
  cfg.stage = StageTag::SrFt;
  if (dry_run) {
    out << "finetune (dry run): " << train_pairs.size() << " train / " << val_pairs.size()
        << " val pairs, " << cfg.epochs << " epochs, "
        << resolved_steps(train_pairs.size(), cfg) << " steps\n";
    return 0;
  }
  const auto init = load_sr_checkpoint<float>(*cfg.init_checkpoint);
  const auto guide_ckpt = load_classifier_checkpoint<float>(*rc.guide_checkpoint);
  Classifier<float> guide = make_classifier(guide_ckpt);
  const fs::path run_dir = prepare_run_dir(rc, "finetune");
  TrainLog log;
  auto ckpt = run_sr_finetune(cfg, train_pairs, val_pairs, guide, init, log);
  log.write_jsonl(run_dir / "train.log.jsonl");
  save_checkpoint(ckpt, run_dir / "sr_ft.ckpt.json");
  const auto& best = log.epochs.at(static_cast<std::size_t>(log.best_epoch - 1));
  out << "finetune: best epoch " << log.best_epoch << ", val merged loss " << best.val_loss
      << ", PSNR " << best.val_metrics.psnr_db << " dB\n"
      << "finetune: artifacts in " << run_dir.string() << "\n";
  return 0;
}

inline int cmd_infer(const RunConfig& rc, bool dry_run, std::ostream& out, std::ostream& err) {
  auto samples = load_samples(rc, err);
  auto pairs = make_pairs(samples);
  if (dry_run) {
    out << "infer (dry run): would super-resolve " << pairs.size() << " images\n";
    return 0;
  }
  StageConfig cfg = rc.stage;
  cfg.stage = StageTag::SrI;
  cfg.init_checkpoint.reset();
  std::optional<SrCheckpoint<float>> ckpt;
  if (rc.sr_checkpoint) ckpt = load_sr_checkpoint<float>(*rc.sr_checkpoint);
  const fs::path run_dir = prepare_run_dir(rc, "infer");
  auto result = run_sr_inference(cfg, pairs, ckpt ? &*ckpt : nullptr);
  const fs::path sr_dir = run_dir / "sr";
  fs::create_directories(sr_dir);
  for (std::size_t i = 0; i < result.sr.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.png", i);
    write_png_gray(sr_dir / name, result.sr[i]);
  }
  nlohmann::json rep{{"psnr_db", result.report.psnr_db},
                     {"ssim", result.report.ssim},
                     {"images", result.sr.size()}};
  if (rc.sr_checkpoint) {
    rep["checkpoint"] = rc.sr_checkpoint->string();
  } else {
    rep["checkpoint"] = nullptr;
    rep["note"] = "untrained lite weights (no pretrained corpus)";
    out << "infer: no sr_checkpoint given; using freshly initialized lite weights\n";
  }
  std::ofstream rout(run_dir / "report.json");
  rout << rep.dump(2) << "\n";
  out << "infer: " << result.sr.size() << " images, PSNR " << result.report.psnr_db
      << " dB, SSIM " << result.report.ssim << "\n"
      << "infer: artifacts in " << run_dir.string() << "\n";
  return 0;
}

inline int cmd_protocol(const RunConfig& rc, bool dry_run, std::ostream& out,
                        std::ostream& err) {
  auto samples = load_samples(rc, err);
  ProtocolConfig pc;
  pc.base = rc.stage;
  pc.families = rc.families;
  pc.losses = rc.losses;
  pc.split = rc.split;
  pc.error_map_count = rc.error_map_count;
  pc.workers = rc.workers;
  if (dry_run) {
    const std::size_t cells = 1 + pc.families.size() * (1 + pc.losses.size());
    const std::size_t trainings = pc.families.size() * pc.losses.size() * 2;
    auto split = split_dataset(samples, pc.split);
    out << "protocol (dry run): " << cells << " grid units, " << trainings
        << " SR trainings of " << resolved_steps(split.train.size(), pc.base)
        << " steps each, on " << split.train.size() << " train / " << split.test.size()
        << " test samples\n";
    return 0;
  }
  const fs::path run_dir = prepare_run_dir(rc, "protocol");
  pc.output_dir = run_dir;
  auto report = run_full_protocol(pc, samples);
  out << "protocol: " << report.rows.size() << " rows -> " << (run_dir / "report.csv").string()
      << "\n";
  for (const auto& skipped : report.metadata.at("skipped_cells"))
    out << "protocol: reused completed cell " << skipped.get<std::string>() << "\n";
  if (!report.ok()) {
    for (const auto& row : report.rows)
      if (row.note.rfind("FAILED", 0) == 0)
        err << "protocol: " << row.family << "/" << row.loss << "/" << row.stage << " "
            << row.note << "\n";
    return 1;
  }
  return 0;
}

}  // namespace casr::cli
