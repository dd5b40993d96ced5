#pragma once
// The full evaluation protocol: for each (SR family x loss) grid cell run
// SR-I -> SR-PT -> SR-FT, train a fresh evaluation classifier on each
// stage's SR outputs, and assemble the results table with LR/HR baselines
// and the fine-tuning improvement table. Completed cells persist their
// results and are skipped on rerun.

#include <atomic>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "casr/pipeline.hpp"
#include "casr/report.hpp"

namespace casr {

struct ProtocolConfig {
  StageConfig base;  // hyperparameters + model/classifier templates; base.stage is ignored
  std::vector<SrFamily> families{SrFamily::CarnLite};
  std::vector<LossKind> losses{LossKind::Combo};
  SplitSpec split{};
  std::optional<std::filesystem::path> output_dir;
  int error_map_count = 4;  // per stage, when persisting
  int workers = 1;          // grid cells are independent; >1 runs them on a thread pool

  void validate() const {
    StageConfig probe = base;
    probe.stage = StageTag::SrPt;
    probe.init_checkpoint.reset();
    probe.validate();
    split.validate();
    if (families.empty()) throw ConfigError("protocol: families grid is empty");
    if (losses.empty()) throw ConfigError("protocol: losses grid is empty");
    for (std::size_t i = 0; i < families.size(); ++i)
      for (std::size_t j = i + 1; j < families.size(); ++j)
        if (families[i] == families[j])
          throw ConfigError("protocol: duplicate family " + to_string(families[i]));
    for (std::size_t i = 0; i < losses.size(); ++i)
      for (std::size_t j = i + 1; j < losses.size(); ++j)
        if (losses[i] == losses[j])
          throw ConfigError("protocol: duplicate loss " + to_string(losses[i]));
    if (error_map_count < 0) throw ConfigError("protocol: error_map_count must be nonnegative");
    if (workers < 1) throw ConfigError("protocol: workers must be at least 1");
  }
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Persisted per completed protocol unit; enough to rebuild summarize() input.
struct CellResult {
  std::vector<std::pair<ReportKey, MetricReport>> cells;
};

inline nlohmann::json cell_result_to_json(const CellResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, report] : r.cells) {
    nlohmann::json j{{"family", key.family}, {"loss", key.loss}, {"stage", key.stage}};
    j["psnr_db"] = report.has_iq ? nlohmann::json(report.psnr_db) : nlohmann::json();
    j["ssim"] = report.has_iq ? nlohmann::json(report.ssim) : nlohmann::json();
    j["macro_f1"] = report.has_cls ? nlohmann::json(report.f1.macro) : nlohmann::json();
    j["samples"] = report.sample_count;
    rows.push_back(std::move(j));
  }
  return nlohmann::json{{"format", "casr-cell-report"}, {"version", 1}, {"cells", rows}};
}

inline CellResult cell_result_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "casr-cell-report")
    throw ValidationError("not a cell report file");
  CellResult r;
  for (const auto& row : j.at("cells")) {
    ReportKey key{row.at("family").get<std::string>(), row.at("loss").get<std::string>(),
                  row.at("stage").get<std::string>()};
    MetricReport m;
    if (!row.at("psnr_db").is_null()) {
      m.has_iq = true;
      m.psnr_db = row.at("psnr_db").get<double>();
      m.ssim = row.at("ssim").get<double>();
    }
    if (!row.at("macro_f1").is_null()) {
      m.has_cls = true;
      m.f1.macro = row.at("macro_f1").get<double>();
    }
    m.sample_count = row.value("samples", std::int64_t{0});
    r.cells.emplace_back(std::move(key), std::move(m));
  }
  return r;
}

// Unit-of-work wrapper: reuse a persisted result when present, otherwise
// compute, persist, and return it.
template <typename Fn>
CellResult run_cached_cell(const std::optional<std::filesystem::path>& output_dir,
                           const std::string& cell_name, bool& was_skipped, Fn&& compute) {
  namespace fs = std::filesystem;
  std::optional<fs::path> cell_dir;
  if (output_dir) {
    cell_dir = *output_dir / cell_name;
    const fs::path marker = *cell_dir / "cell_report.json";
    if (fs::is_regular_file(marker)) {
      std::ifstream in(marker);
      was_skipped = true;
      return cell_result_from_json(nlohmann::json::parse(in));
    }
    fs::create_directories(*cell_dir);
  }
  CellResult result = compute(cell_dir);
  if (cell_dir) {
    std::ofstream out(*cell_dir / "cell_report.json");
    if (!out) throw ValidationError("cannot write cell report in " + cell_dir->string());
    out << cell_result_to_json(result).dump(2) << "\n";
  }
  return result;
}

// One grid unit's outcome; tasks run concurrently but merge in task order so
// the report is identical for any worker count.
struct CellOutcome {
  std::string cell_name;
  std::string family, loss, stage;  // failure attribution
  std::vector<std::pair<ReportKey, MetricReport>> cells;
  bool skipped = false;
  bool failed = false;
  std::string error;
};

inline void run_cell_tasks(std::vector<std::function<CellOutcome()>>& tasks,
                           std::vector<CellOutcome>& outcomes, int workers) {
  outcomes.resize(tasks.size());
  const int n = std::min<int>(workers, static_cast<int>(tasks.size()));
  if (n <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) outcomes[i] = tasks[i]();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
        outcomes[i] = tasks[i]();
    });
  for (auto& t : pool) t.join();
}

template <typename T>
void write_stage_error_maps(const std::optional<std::filesystem::path>& cell_dir,
                            const std::string& stage_slug,
                            const std::vector<PairedSample<T>>& test_pairs,
                            const std::vector<Image<T>>& sr, int count) {
  if (!cell_dir || count == 0) return;
  namespace fs = std::filesystem;
  const fs::path dir = *cell_dir / "error_maps";
  fs::create_directories(dir);
  const int n = std::min<int>(count, static_cast<int>(test_pairs.size()));
  for (int i = 0; i < n; ++i) {
    const auto m = error_map(image_cast<double>(test_pairs[static_cast<std::size_t>(i)].hr),
                             image_cast<double>(sr[static_cast<std::size_t>(i)]));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03d.png", stage_slug.c_str(), i);
    write_error_map_png(dir / buf, m);
  }
}

// Train the shared-seed evaluation classifier on one stage's SR outputs and
// report macro-F1 over that stage's test outputs.
template <typename T>
MetricReport evaluate_stage_f1(const StageConfig& base, std::uint64_t eval_seed,
                               const std::vector<LabeledSample<T>>& train_sr,
                               const std::vector<LabeledSample<T>>& test_sr,
                               const std::optional<std::filesystem::path>& cell_dir,
                               const std::string& stage_slug) {
  StageConfig cfg = base;
  cfg.stage = StageTag::Classifier;
  cfg.seed = eval_seed;
  cfg.init_checkpoint.reset();
  TrainLog log;
  auto out = train_classifier(cfg, train_sr, test_sr, log, "sr");
  if (cell_dir) log.write_jsonl(*cell_dir / ("eval_cls_" + stage_slug + ".log.jsonl"));
  return out.report;
}

}  // namespace detail

template <typename T>
ProtocolReport run_full_protocol(const ProtocolConfig& pc,
                                 const std::vector<LabeledSample<T>>& dataset) {
  namespace fs = std::filesystem;
  pc.validate();
  const auto started = detail::utc_timestamp();
  if (pc.output_dir) fs::create_directories(*pc.output_dir);

  auto split = split_dataset(dataset, pc.split);
  auto train_pairs = make_pairs(split.train);
  auto test_pairs = make_pairs(split.test);

  const std::uint64_t guide_seed = sub_seed(pc.base.seed, "guide-classifier");
  const std::uint64_t eval_seed = sub_seed(pc.base.seed, "eval-classifier");

  std::vector<std::pair<ReportKey, MetricReport>> cells;
  std::vector<ProtocolRow> failure_rows;
  std::vector<std::string> skipped;
  nlohmann::json failures = nlohmann::json::array();

  const auto record_failure = [&](const std::string& family, const std::string& loss,
                                  const std::string& stage, const std::string& what) {
    ProtocolRow row;
    row.family = family;
    row.loss = loss;
    row.stage = stage;
    row.note = "FAILED: " + what;
    failure_rows.push_back(std::move(row));
    failures.push_back({{"family", family}, {"loss", loss}, {"stage", stage}, {"error", what}});
  };

  // Guide classifier: HR-trained, then frozen inside every SR-FT cell.
  StageConfig guide_cfg = pc.base;
  guide_cfg.stage = StageTag::Classifier;
  guide_cfg.seed = guide_seed;
  guide_cfg.init_checkpoint.reset();
  TrainLog guide_log;
  auto guide_out = train_classifier(guide_cfg, split.train, split.test, guide_log, "hr");
  if (pc.output_dir) {
    guide_log.write_jsonl(*pc.output_dir / "guide_classifier.log.jsonl");
    save_checkpoint(guide_out.checkpoint, *pc.output_dir / "guide_classifier.ckpt.json");
  }

  // Grid units are independent given the guide checkpoint, so they are built
  // as tasks and run on `workers` threads; outcomes merge in task order.
  std::vector<std::function<detail::CellOutcome()>> tasks;

  const auto guarded = [&pc](std::string cell_name, std::string family, std::string loss,
                             std::string stage, auto compute) {
    return [&pc, cell_name = std::move(cell_name), family = std::move(family),
            loss = std::move(loss), stage = std::move(stage),
            compute = std::move(compute)]() -> detail::CellOutcome {
      detail::CellOutcome out;
      out.cell_name = cell_name;
      out.family = family;
      out.loss = loss;
      out.stage = stage;
      try {
        out.cells = detail::run_cached_cell(pc.output_dir, cell_name, out.skipped, compute).cells;
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
      return out;
    };
  };

  // Baselines: classifier on HR images and on raw LR images.
  tasks.push_back(guarded(
      "baselines", "-", "-", "baselines",
      [&pc, &split, &train_pairs, &test_pairs, eval_seed](const std::optional<fs::path>& cell_dir) {
        detail::CellResult r;
        StageConfig hr_cfg = pc.base;
        hr_cfg.stage = StageTag::Classifier;
        hr_cfg.seed = eval_seed;
        hr_cfg.init_checkpoint.reset();
        TrainLog hr_log;
        auto hr_out = train_classifier(hr_cfg, split.train, split.test, hr_log, "hr");
        if (cell_dir) hr_log.write_jsonl(*cell_dir / "eval_cls_hr.log.jsonl");
        r.cells.push_back({ReportKey{"-", "-", "HR"}, hr_out.report});

        StageConfig lr_cfg = hr_cfg;
        lr_cfg.classifier.input_size = pc.base.classifier.input_size / 2;
        TrainLog lr_log;
        auto lr_out = train_classifier(lr_cfg, pairs_as_samples(train_pairs, true),
                                       pairs_as_samples(test_pairs, true), lr_log, "lr");
        if (cell_dir) lr_log.write_jsonl(*cell_dir / "eval_cls_lr.log.jsonl");
        r.cells.push_back({ReportKey{"-", "-", "LR"}, lr_out.report});
        return r;
      }));

  for (SrFamily family : pc.families) {
    const std::string fam = to_string(family);
    SrModelConfig fam_model = pc.base.sr_model;
    fam_model.family = family;

    // SR-I: untrained lite model; loss-independent, one row per family.
    tasks.push_back(guarded(
        fam + "-sr_i", fam, "-", "SR-I",
        [&pc, &train_pairs, &test_pairs, eval_seed, fam,
         fam_model](const std::optional<fs::path>& cell_dir) {
          detail::CellResult r;
          SrModel<T> model(fam_model, sub_seed(pc.base.seed, "cell:" + fam + ":sr-i"));
          auto sr_test = super_resolve(model, test_pairs, pc.base.batch_size);
          std::vector<Image<T>> hr_test;
          for (const auto& p : test_pairs) hr_test.push_back(p.hr);
          MetricReport report = iq_report<T>(sr_test, hr_test);
          auto train_sr = sr_outputs_as_samples(model, train_pairs, pc.base.batch_size);
          std::vector<LabeledSample<T>> test_sr;
          for (std::size_t i = 0; i < sr_test.size(); ++i)
            test_sr.push_back({sr_test[i], test_pairs[i].label, "sr", test_pairs[i].source});
          const MetricReport f1 = detail::evaluate_stage_f1(pc.base, eval_seed, train_sr,
                                                            test_sr, cell_dir, "sr_i");
          report.has_cls = true;
          report.f1 = f1.f1;
          report.confusion = f1.confusion;
          detail::write_stage_error_maps(cell_dir, "sr_i", test_pairs, sr_test,
                                         pc.error_map_count);
          r.cells.push_back({ReportKey{fam, "-", "SR-I"}, report});
          return r;
        }));

    for (LossKind loss : pc.losses) {
      const std::string loss_name = to_string(loss);
      const std::string cell_name = fam + "-" + loss_name;
      const std::uint64_t cell_seed = sub_seed(pc.base.seed, "cell:" + fam + ":" + loss_name);
      tasks.push_back(guarded(
          cell_name, fam, loss_name, "SR-PT/SR-FT",
          [&pc, &train_pairs, &test_pairs, &guide_out, eval_seed, fam, fam_model, loss,
           loss_name, cell_seed](const std::optional<fs::path>& cell_dir) {
            detail::CellResult r;
            std::vector<Image<T>> hr_test;
            for (const auto& p : test_pairs) hr_test.push_back(p.hr);

            // SR-PT.
            StageConfig pt_cfg = pc.base;
            pt_cfg.stage = StageTag::SrPt;
            pt_cfg.sr_model = fam_model;
            pt_cfg.loss.kind = loss;
            pt_cfg.seed = sub_seed(cell_seed, "sr-pt");
            pt_cfg.init_checkpoint.reset();
            TrainLog pt_log;
            auto pt_ckpt = run_sr_pretrain(pt_cfg, train_pairs, test_pairs, pt_log);
            SrModel<T> pt_model = make_sr_model(pt_ckpt);
            auto pt_sr_test = super_resolve(pt_model, test_pairs, pc.base.batch_size);
            MetricReport pt_report = iq_report<T>(pt_sr_test, hr_test);
            {
              auto train_sr = sr_outputs_as_samples(pt_model, train_pairs, pc.base.batch_size);
              std::vector<LabeledSample<T>> test_sr;
              for (std::size_t i = 0; i < pt_sr_test.size(); ++i)
                test_sr.push_back(
                    {pt_sr_test[i], test_pairs[i].label, "sr", test_pairs[i].source});
              const MetricReport f1 = detail::evaluate_stage_f1(pc.base, eval_seed, train_sr,
                                                                test_sr, cell_dir, "sr_pt");
              pt_report.has_cls = true;
              pt_report.f1 = f1.f1;
              pt_report.confusion = f1.confusion;
            }
            if (cell_dir) {
              pt_log.write_jsonl(*cell_dir / "sr_pt.log.jsonl");
              save_checkpoint(pt_ckpt, *cell_dir / "sr_pt.ckpt.json");
            }
            detail::write_stage_error_maps(cell_dir, "sr_pt", test_pairs, pt_sr_test,
                                           pc.error_map_count);
            r.cells.push_back({ReportKey{fam, loss_name, "SR-PT"}, pt_report});

            // SR-FT.
            StageConfig ft_cfg = pt_cfg;
            ft_cfg.stage = StageTag::SrFt;
            ft_cfg.seed = sub_seed(cell_seed, "sr-ft");
            ft_cfg.init_checkpoint = cell_dir ? std::optional(*cell_dir / "sr_pt.ckpt.json")
                                              : std::optional<fs::path>("<in-memory>");
            Classifier<T> guide = make_classifier(guide_out.checkpoint);
            TrainLog ft_log;
            auto ft_ckpt = run_sr_finetune(ft_cfg, train_pairs, test_pairs, guide, pt_ckpt,
                                           ft_log);
            SrModel<T> ft_model = make_sr_model(ft_ckpt);
            auto ft_sr_test = super_resolve(ft_model, test_pairs, pc.base.batch_size);
            MetricReport ft_report = iq_report<T>(ft_sr_test, hr_test);
            {
              auto train_sr = sr_outputs_as_samples(ft_model, train_pairs, pc.base.batch_size);
              std::vector<LabeledSample<T>> test_sr;
              for (std::size_t i = 0; i < ft_sr_test.size(); ++i)
                test_sr.push_back(
                    {ft_sr_test[i], test_pairs[i].label, "sr", test_pairs[i].source});
              const MetricReport f1 = detail::evaluate_stage_f1(pc.base, eval_seed, train_sr,
                                                                test_sr, cell_dir, "sr_ft");
              ft_report.has_cls = true;
              ft_report.f1 = f1.f1;
              ft_report.confusion = f1.confusion;
            }
            if (cell_dir) {
              ft_log.write_jsonl(*cell_dir / "sr_ft.log.jsonl");
              save_checkpoint(ft_ckpt, *cell_dir / "sr_ft.ckpt.json");
            }
            detail::write_stage_error_maps(cell_dir, "sr_ft", test_pairs, ft_sr_test,
                                           pc.error_map_count);
            r.cells.push_back({ReportKey{fam, loss_name, "SR-FT"}, ft_report});
            return r;
          }));
    }
  }

  std::vector<detail::CellOutcome> outcomes;
  detail::run_cell_tasks(tasks, outcomes, pc.workers);
  for (auto& out : outcomes) {
    if (out.failed) {
      record_failure(out.family, out.loss, out.stage, out.error);
      continue;
    }
    if (out.skipped) skipped.push_back(out.cell_name);
    cells.insert(cells.end(), out.cells.begin(), out.cells.end());
  }

  ProtocolReport report = summarize(cells);

  // The SR-I rows describe a deviation: no pretrained weights exist at this
  // scale, so inference runs a freshly initialized lite model.
  for (auto& row : report.rows)
    if (row.stage == "SR-I") row.note = "untrained lite weights (no pretrained corpus)";
  report.rows.insert(report.rows.end(), failure_rows.begin(), failure_rows.end());
  detail::sort_rows(report.rows);

  // Improvement table over macro-F1 for every (family, loss) with both stages.
  std::vector<std::pair<std::string, double>> pt_f1, ft_f1;
  for (const auto& [key, m] : cells) {
    if (!m.has_cls) continue;
    if (key.stage == "SR-PT") pt_f1.push_back({key.family + "-" + key.loss, m.f1.macro});
    if (key.stage == "SR-FT") ft_f1.push_back({key.family + "-" + key.loss, m.f1.macro});
  }
  std::vector<ImprovementRow> improvement;
  if (!pt_f1.empty() && pt_f1.size() == ft_f1.size())
    improvement = improvement_table(pt_f1, ft_f1);

  report.metadata["started"] = started;
  report.metadata["finished"] = detail::utc_timestamp();
  report.metadata["master_seed"] = hex64(pc.base.seed);
  report.metadata["guide_seed"] = hex64(guide_seed);
  report.metadata["eval_seed"] = hex64(eval_seed);
  report.metadata["train_samples"] = split.train.size();
  report.metadata["test_samples"] = split.test.size();
  report.metadata["guide_macro_f1"] = guide_out.report.f1.macro;
  report.metadata["sr_model"] = to_json(pc.base.sr_model);
  report.metadata["classifier"] = to_json(pc.base.classifier);
  report.metadata["learning_rate"] = pc.base.learning_rate;
  report.metadata["epochs"] = pc.base.epochs;
  report.metadata["batch_size"] = pc.base.batch_size;
  report.metadata["workers"] = pc.workers;
  report.metadata["deviations"] = nlohmann::json::array(
      {"SR-I runs a freshly initialized lite model; pretrained SR weights are out of scope"});
  report.metadata["failures"] = failures;
  report.metadata["skipped_cells"] = skipped;
  {
    nlohmann::json imp = nlohmann::json::array();
    for (const auto& r : improvement)
      imp.push_back({{"configuration", r.configuration},
                     {"f1_pt", r.f1_pt},
                     {"f1_ft", r.f1_ft},
                     {"improvement", r.delta}});
    report.metadata["improvement"] = imp;
  }

  if (pc.output_dir) {
    write_protocol_csv(report, *pc.output_dir / "report.csv");
    write_protocol_json(report, *pc.output_dir / "report.json");
    if (!improvement.empty()) {
      write_improvement_csv(improvement, *pc.output_dir / "improvement.csv");
      write_improvement_json(improvement, *pc.output_dir / "improvement.json");
    }
  }
  return report;
}

}  // namespace casr
