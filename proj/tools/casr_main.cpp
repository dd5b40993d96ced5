// casr: synthetic-SAR super-resolution training and evaluation harness.
// Subcommands: generate, pretrain, finetune, infer, train-classifier,
// protocol. Configuration precedence: flags > config file > defaults.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "casr/cli.hpp"

using namespace casr;

namespace {

struct Overrides {
  std::string config_file;
  std::optional<std::string> output_root, dataset, dataset_out, loss, family;
  std::optional<std::string> init_ckpt, guide_ckpt, sr_ckpt;
  std::vector<std::string> families, losses;
  std::optional<std::uint64_t> seed, split_seed, data_seed;
  std::optional<int> epochs, batch, per_class, size, looks, error_maps, workers;
  std::optional<double> lr, train_fraction;
  std::optional<bool> pose_jitter;
  bool force = false;
  bool dry_run = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config_file, "JSON config file (flags override it)");
  sub->add_option("--output-root", o.output_root,
                  "Run directory root (default runs; env CASR_OUTPUT_ROOT overrides)");
  sub->add_option("--seed", o.seed, "Master seed for the stage");
  sub->add_option("--epochs", o.epochs, "Training epochs");
  sub->add_option("--batch-size", o.batch, "Mini-batch size");
  sub->add_option("--learning-rate", o.lr, "Adam learning rate");
  sub->add_option("--loss", o.loss, "SR criterion: l1|combo|hybrid");
  sub->add_option("--family", o.family, "SR family: edsr_lite|carn_lite|rcan_lite");
  sub->add_option("--dataset", o.dataset, "Class-folder PNG dataset root");
  sub->add_option("--per-class", o.per_class, "Synthetic samples per class");
  sub->add_option("--size", o.size, "Synthetic image side (pixels)");
  sub->add_option("--data-seed", o.data_seed, "Synthetic generator seed");
  sub->add_option("--speckle-looks", o.looks, "Synthetic speckle looks (higher = cleaner)");
  sub->add_flag_callback(
      "--pose-jitter", [&o] { o.pose_jitter = true; }, "Enable synthetic pose jitter");
  sub->add_flag_callback(
      "--no-pose-jitter", [&o] { o.pose_jitter = false; }, "Disable synthetic pose jitter");
  sub->add_option("--train-fraction", o.train_fraction, "Train split fraction in (0,1)");
  sub->add_option("--split-seed", o.split_seed, "Split shuffle seed");
  sub->add_option("--init-checkpoint", o.init_ckpt, "SR-PT checkpoint to fine-tune from");
  sub->add_option("--guide-checkpoint", o.guide_ckpt, "HR-trained guide classifier checkpoint");
  sub->add_option("--sr-checkpoint", o.sr_ckpt, "SR weights for inference");
  sub->add_option("--dataset-out", o.dataset_out, "Explicit dataset directory for generate");
  sub->add_option("--families", o.families, "Protocol family grid (comma-separated)")
      ->delimiter(',');
  sub->add_option("--losses", o.losses, "Protocol loss grid (comma-separated)")->delimiter(',');
  sub->add_option("--error-maps", o.error_maps, "Error maps written per protocol stage");
  sub->add_option("--workers", o.workers, "Threads across independent protocol cells");
  sub->add_flag("--force", o.force, "Overwrite a non-empty generate target");
  sub->add_flag("--dry-run", o.dry_run, "Print the resolved work plan without computing");
}

void apply_overrides(RunConfig& rc, const Overrides& o, std::vector<std::string>& v) {
  if (o.output_root) rc.output_root = *o.output_root;
  if (o.dataset) {
    rc.data.dataset = *o.dataset;
    rc.data.synthetic.reset();
  }
  if (o.per_class || o.size || o.data_seed || o.looks || o.pose_jitter) {
    SyntheticSpec spec = rc.data.synthetic.value_or(SyntheticSpec{});
    if (o.per_class) spec.per_class = *o.per_class;
    if (o.size) spec.size = *o.size;
    if (o.data_seed) spec.seed = *o.data_seed;
    if (o.looks) spec.speckle_looks = *o.looks;
    if (o.pose_jitter) spec.pose_jitter = *o.pose_jitter;
    rc.data.synthetic = spec;
  }
  if (o.loss) {
    try {
      rc.stage.loss.kind = loss_kind_from_string(*o.loss);
    } catch (const std::exception& e) {
      v.push_back(std::string("--loss: ") + e.what());
    }
  }
  if (o.family) {
    try {
      rc.stage.sr_model.family = sr_family_from_string(*o.family);
    } catch (const std::exception& e) {
      v.push_back(std::string("--family: ") + e.what());
    }
  }
  if (!o.families.empty()) {
    std::vector<SrFamily> parsed;
    for (const auto& f : o.families) {
      try {
        parsed.push_back(sr_family_from_string(f));
      } catch (const std::exception& e) {
        v.push_back(std::string("--families: ") + e.what());
      }
    }
    rc.families = std::move(parsed);
  }
  if (!o.losses.empty()) {
    std::vector<LossKind> parsed;
    for (const auto& l : o.losses) {
      try {
        parsed.push_back(loss_kind_from_string(l));
      } catch (const std::exception& e) {
        v.push_back(std::string("--losses: ") + e.what());
      }
    }
    rc.losses = std::move(parsed);
  }
  if (o.seed) rc.stage.seed = *o.seed;
  if (o.epochs) rc.stage.epochs = *o.epochs;
  if (o.batch) rc.stage.batch_size = *o.batch;
  if (o.lr) rc.stage.learning_rate = *o.lr;
  if (o.train_fraction) rc.split.train_fraction = *o.train_fraction;
  if (o.split_seed) rc.split.seed = *o.split_seed;
  if (o.init_ckpt) rc.stage.init_checkpoint = *o.init_ckpt;
  if (o.guide_ckpt) rc.guide_checkpoint = *o.guide_ckpt;
  if (o.sr_ckpt) rc.sr_checkpoint = *o.sr_ckpt;
  if (o.dataset_out) rc.dataset_out = *o.dataset_out;
  if (o.error_maps) rc.error_map_count = *o.error_maps;
  if (o.workers) rc.workers = *o.workers;
  if (o.force) rc.force = true;
}

void command_requirements(const std::string& cmd, const RunConfig& rc,
                          std::vector<std::string>& v) {
  if (cmd == "generate" && rc.data.dataset)
    v.push_back("data.dataset: generate produces a dataset; configure data.synthetic instead");
  if (cmd == "finetune") {
    if (!rc.stage.init_checkpoint)
      v.push_back("stage.init_checkpoint: required for finetune (an SR-PT checkpoint)");
    if (!rc.guide_checkpoint)
      v.push_back("guide_checkpoint: required for finetune (an HR-trained classifier)");
  }
}

RunConfig resolve_config(const std::string& cmd, const Overrides& o) {
  nlohmann::json file = nlohmann::json::object();
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw IngestionError("cannot open config file: " + o.config_file);
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError("config file is not valid JSON: " + o.config_file + " (" + e.what() +
                           ")");
    }
  }
  std::vector<std::string> violations;
  RunConfig rc = detail::parse_structure(file, violations);
  apply_overrides(rc, o, violations);
  check_semantics(rc, violations);
  command_requirements(cmd, rc, violations);
  throw_if_violations(violations);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casr: classification-aware super-resolution for synthetic SAR ship imagery"};
  app.require_subcommand(1);
  Overrides o;

  using Fn = int (*)(const RunConfig&, bool, std::ostream&, std::ostream&);
  const std::vector<std::pair<std::string, Fn>> commands = {
      {"generate", cli::cmd_generate},
      {"pretrain", cli::cmd_pretrain},
      {"finetune", cli::cmd_finetune},
      {"infer", cli::cmd_infer},
      {"train-classifier", cli::cmd_train_classifier},
      {"protocol", cli::cmd_protocol}};
  const std::vector<std::pair<std::string, std::string>> descriptions = {
      {"generate", "Write a synthetic SAR ship dataset (class folders + manifest)"},
      {"pretrain", "SR-PT: image-quality pretraining of an SR model"},
      {"finetune", "SR-FT: classification-guided fine-tuning from an SR-PT checkpoint"},
      {"infer", "SR-I: super-resolve a dataset and report PSNR/SSIM"},
      {"train-classifier", "Train the small CNN classifier on HR images"},
      {"protocol", "Full (family x loss) grid with baselines, reports, error maps"}};
  for (const auto& [name, desc] : descriptions) add_common(app.add_subcommand(name, desc), o);

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [name, fn] : commands)
      if (app.got_subcommand(name))
        return fn(resolve_config(name, o), o.dry_run, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
