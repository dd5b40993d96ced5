#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "casr/cli.hpp"

using namespace casr;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "casr-cli-tests";

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  fs::create_directories(kWork);
  const fs::path out = kWork / ("stdout-" + std::to_string(counter) + ".txt");
  const fs::path err = kWork / ("stderr-" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = env + (env.empty() ? "" : " ") + CASR_CLI_PATH + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write_tiny_config(const std::string& name) {
  const fs::path path = kWork / name;
  fs::create_directories(kWork);
  std::ofstream out(path);
  out << R"({
  "data": {"synthetic": {"per_class": 6, "size": 16, "seed": 5, "speckle_looks": 4, "pose_jitter": true}},
  "split": {"train_fraction": 0.6666666666666666, "seed": 5, "stratified": true},
  "stage": {
    "loss": {"kind": "l1"},
    "sr_model": {"family": "carn_lite", "channels": 8, "blocks": 1, "attention_reduction": 2},
    "classifier": {"input_size": 16, "head_hidden": 16},
    "learning_rate": 0.001, "epochs": 2, "batch_size": 8, "seed": 9
  },
  "protocol": {"families": ["carn_lite"], "losses": ["l1"], "error_map_count": 1}
})";
  return path;
}

}  // namespace

TEST_CASE("empty config resolves to the documented defaults") {
  const RunConfig rc = run_config_from_json(nlohmann::json::object());
  CHECK(rc.stage.learning_rate == 1e-4);
  CHECK(rc.stage.epochs == 10);
  CHECK(rc.stage.batch_size == 64);
  CHECK(rc.stage.loss.kind == LossKind::Combo);
  CHECK(rc.stage.sr_model.family == SrFamily::CarnLite);
  CHECK(rc.split.train_fraction == 0.8);
  CHECK(rc.workers == 1);
  CHECK_FALSE(rc.data.dataset.has_value());
}

TEST_CASE("resolved config round-trips through JSON") {
  RunConfig rc;
  rc.data.synthetic = SyntheticSpec{12, 32, 99, 8, false};
  rc.split.train_fraction = 0.7;
  rc.split.seed = 3;
  rc.stage.loss.kind = LossKind::Hybrid;
  rc.stage.sr_model.family = SrFamily::RcanLite;
  rc.stage.sr_model.channels = 12;
  rc.stage.epochs = 4;
  rc.stage.seed = 21;
  rc.stage.init_checkpoint = "ckpt/sr_pt.json";
  rc.families = {SrFamily::CarnLite, SrFamily::RcanLite};
  rc.losses = {LossKind::L1, LossKind::Combo};
  rc.workers = 2;
  rc.guide_checkpoint = "g.json";
  rc.output_root = "custom-runs";

  const nlohmann::json dumped = to_json(rc);
  const RunConfig back = run_config_from_json(dumped);
  CHECK(to_json(back).dump() == dumped.dump());
  CHECK(back.stage.init_checkpoint == rc.stage.init_checkpoint);
  CHECK(back.families == rc.families);
  CHECK(back.losses == rc.losses);
}

TEST_CASE("validation enumerates every violation at once") {
  const auto j = nlohmann::json::parse(R"({
    "bogus": 1,
    "data": {"synthetic": {"per_class": 0, "sizes": 3}},
    "stage": {"epoch": 5, "learning_rate": -1.0},
    "protocol": {"families": ["carn_lite", "carn_lite"], "losses": []}
  })");
  try {
    run_config_from_json(j);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    for (const char* needle :
         {"config.bogus: unknown key", "data.synthetic.sizes: unknown key",
          "stage.epoch: unknown key", "per_class must be positive",
          "learning_rate must be positive", "protocol.families: duplicate",
          "protocol.losses: must not be empty"}) {
      INFO(msg);
      CHECK(msg.find(needle) != std::string::npos);
    }
    CHECK(msg.find("7 violations") != std::string::npos);
  }
}

TEST_CASE("wrong types and bad enum spellings are reported with their path") {
  const auto j = nlohmann::json::parse(R"({
    "stage": {"loss": {"kind": "l2"}, "epochs": "ten"},
    "split": {"train_fraction": true}
  })");
  try {
    run_config_from_json(j);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stage.loss.kind") != std::string::npos);
    CHECK(msg.find("unknown loss kind 'l2'") != std::string::npos);
    CHECK(msg.find("stage.epochs: wrong type") != std::string::npos);
    CHECK(msg.find("split.train_fraction: wrong type") != std::string::npos);
  }
}

TEST_CASE("config hash is canonical over key order and sensitive to content") {
  const auto a = run_config_from_json(nlohmann::json::parse(
      R"({"stage": {"epochs": 3, "seed": 7}, "split": {"seed": 1}})"));
  const auto b = run_config_from_json(nlohmann::json::parse(
      R"({"split": {"seed": 1}, "stage": {"seed": 7, "epochs": 3}})"));
  CHECK(config_hash(a, "pretrain") == config_hash(b, "pretrain"));
  CHECK(config_hash(a, "pretrain") != config_hash(a, "finetune"));
  auto c = a;
  c.stage.seed = 8;
  CHECK(config_hash(a, "pretrain") != config_hash(c, "pretrain"));
}

TEST_CASE("config file loading failure modes") {
  CHECK_THROWS_AS(load_run_config(kWork / "does-not-exist.json"), IngestionError);
  fs::create_directories(kWork);
  const fs::path broken = kWork / "broken.json";
  std::ofstream(broken) << "{ not json";
  CHECK_THROWS_AS(load_run_config(broken), IngestionError);
}

TEST_CASE("cli generate writes the corpus and is byte-stable per seed") {
  const fs::path root_a = kWork / "gen-a";
  const fs::path root_b = kWork / "gen-b";
  fs::remove_all(root_a);
  fs::remove_all(root_b);

  const std::string common = "generate --per-class 50 --size 16 --data-seed 7 --dataset-out ";
  auto ra = run_cli(common + (root_a / "data").string() + " --output-root " + root_a.string());
  INFO(ra.err);
  REQUIRE(ra.exit_code == 0);
  auto rb = run_cli(common + (root_b / "data").string() + " --output-root " + root_b.string());
  REQUIRE(rb.exit_code == 0);

  // 6 classes x 50 images, manifest counts match the census.
  std::size_t census = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root_a / "data"))
    if (entry.path().extension() == ".png") ++census;
  CHECK(census == 300);
  const auto manifest = nlohmann::json::parse(slurp(root_a / "data" / "manifest.json"));
  std::size_t manifest_total = 0;
  for (const auto& [cls, count] : manifest.at("counts").items()) {
    std::size_t dir_count = 0;
    for (const auto& entry : fs::directory_iterator(root_a / "data" / cls))
      if (entry.path().extension() == ".png") ++dir_count;
    CHECK(dir_count == count.get<std::size_t>());
    manifest_total += count.get<std::size_t>();
  }
  CHECK(manifest_total == census);

  // Same seed, different invocation: byte-identical files.
  for (const auto& entry : fs::recursive_directory_iterator(root_a / "data")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const fs::path rel = fs::relative(entry.path(), root_a / "data");
    CHECK(slurp(entry.path()) == slurp(root_b / "data" / rel));
  }

  // Non-empty target without --force fails; with it, succeeds.
  auto refuse = run_cli(common + (root_a / "data").string() + " --output-root " +
                        root_a.string());
  CHECK(refuse.exit_code == 1);
  CHECK(refuse.err.find("not empty") != std::string::npos);
  auto forced = run_cli(common + (root_a / "data").string() + " --force --output-root " +
                        root_a.string());
  CHECK(forced.exit_code == 0);
}

TEST_CASE("cli dry runs print the plan and write nothing") {
  const fs::path root = kWork / "dry-root";
  fs::remove_all(root);
  auto r = run_cli("pretrain --per-class 4 --size 16 --epochs 2 --batch-size 8 --dry-run "
                   "--output-root " +
                   root.string());
  REQUIRE(r.exit_code == 0);
  // 24 samples, 0.8 stratified split -> 18 train pairs -> 3 steps x 2 epochs.
  CHECK(r.out.find("6 steps") != std::string::npos);
  CHECK_FALSE(fs::exists(root));

  auto g = run_cli("generate --per-class 9 --dry-run --output-root " + root.string());
  REQUIRE(g.exit_code == 0);
  CHECK(g.out.find("54 images") != std::string::npos);
  CHECK_FALSE(fs::exists(root));
}

TEST_CASE("cli finetune without checkpoints enumerates the missing fields") {
  auto r = run_cli("finetune --per-class 4 --size 16");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("stage.init_checkpoint: required for finetune") != std::string::npos);
  CHECK(r.err.find("guide_checkpoint: required for finetune") != std::string::npos);
}

TEST_CASE("cli rejects unknown flags and unknown config keys") {
  auto flag = run_cli("pretrain --such-flag 1 --dry-run");
  CHECK(flag.exit_code != 0);
  const fs::path bad = kWork / "bad.json";
  fs::create_directories(kWork);
  std::ofstream(bad) << R"({"stagee": {}})";
  auto key = run_cli("pretrain --dry-run -c " + bad.string());
  CHECK(key.exit_code == 1);
  CHECK(key.err.find("config.stagee: unknown key") != std::string::npos);
}

TEST_CASE("cli pretrain writes checkpoint, log, and resolved config") {
  const fs::path cfg = write_tiny_config("tiny-pt.json");
  const fs::path root = kWork / "pt-root";
  fs::remove_all(root);
  auto r = run_cli("pretrain -c " + cfg.string() + " --output-root " + root.string());
  INFO(r.err);
  REQUIRE(r.exit_code == 0);

  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) run_dir = entry.path();
  REQUIRE_FALSE(run_dir.empty());
  CHECK(run_dir.filename().string().rfind("pretrain-", 0) == 0);
  CHECK(fs::is_regular_file(run_dir / "sr_pt.ckpt.json"));
  CHECK(fs::is_regular_file(run_dir / "train.log.jsonl"));

  // The resolved config re-parses and reproduces the effective settings.
  const RunConfig resolved = load_run_config(run_dir / "config.json");
  CHECK(resolved.stage.epochs == 2);
  CHECK(resolved.stage.loss.kind == LossKind::L1);
  CHECK(resolved.output_root == root);

  const auto ckpt = load_sr_checkpoint<float>(run_dir / "sr_pt.ckpt.json");
  CHECK(ckpt.stage == StageTag::SrPt);
}

TEST_CASE("cli protocol completes, then reuses finished cells on rerun") {
  const fs::path cfg = write_tiny_config("tiny-proto.json");
  const fs::path root = kWork / "proto-root";
  fs::remove_all(root);
  auto first = run_cli("protocol -c " + cfg.string() + " --output-root " + root.string());
  INFO(first.err);
  REQUIRE(first.exit_code == 0);
  CHECK(first.out.find("10 rows") != std::string::npos);
  CHECK(first.out.find("reused") == std::string::npos);

  auto second = run_cli("protocol -c " + cfg.string() + " --output-root " + root.string());
  REQUIRE(second.exit_code == 0);
  CHECK(second.out.find("reused completed cell baselines") != std::string::npos);
  CHECK(second.out.find("reused completed cell carn_lite-l1") != std::string::npos);

  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) run_dir = entry.path();
  const auto report = nlohmann::json::parse(slurp(run_dir / "report.json"));
  CHECK(report.at("rows").size() == 10);
  CHECK(report.at("metadata").at("workers") == 1);
}

TEST_CASE("CASR_OUTPUT_ROOT overrides the configured output root") {
  const fs::path env_root = kWork / "env-root";
  const fs::path cfg_root = kWork / "cfg-root";
  fs::remove_all(env_root);
  fs::remove_all(cfg_root);
  auto r = run_cli("generate --per-class 2 --size 16 --output-root " + cfg_root.string(),
                   "CASR_OUTPUT_ROOT=" + env_root.string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(env_root));
  CHECK_FALSE(fs::exists(cfg_root));
}

TEST_CASE("cli flags override config file values") {
  const fs::path cfg = write_tiny_config("tiny-override.json");
  auto r = run_cli("pretrain -c " + cfg.string() + " --epochs 5 --batch-size 4 --dry-run");
  REQUIRE(r.exit_code == 0);
  // 36 samples at 2/3 -> 24 train pairs; batch 4 -> 6 steps/epoch x 5 epochs.
  CHECK(r.out.find("5 epochs") != std::string::npos);
  CHECK(r.out.find("30 steps") != std::string::npos);
}

TEST_CASE("cli infer on an exported dataset round-trips through PNG ingestion") {
  const fs::path cfg = write_tiny_config("tiny-infer.json");
  const fs::path root = kWork / "infer-root";
  fs::remove_all(root);
  auto gen = run_cli("generate -c " + cfg.string() + " --dataset-out " +
                     (root / "data").string() + " --output-root " + root.string());
  REQUIRE(gen.exit_code == 0);
  auto inf = run_cli("infer -c " + cfg.string() + " --dataset " + (root / "data").string() +
                     " --output-root " + root.string());
  INFO(inf.err);
  REQUIRE(inf.exit_code == 0);
  CHECK(inf.out.find("36 images") != std::string::npos);
  CHECK(inf.out.find("freshly initialized") != std::string::npos);

  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && entry.path().filename().string().rfind("infer-", 0) == 0)
      run_dir = entry.path();
  REQUIRE_FALSE(run_dir.empty());
  std::size_t sr_count = 0;
  for (const auto& entry : fs::directory_iterator(run_dir / "sr"))
    if (entry.path().extension() == ".png") ++sr_count;
  CHECK(sr_count == 36);
  const auto report = nlohmann::json::parse(slurp(run_dir / "report.json"));
  CHECK(report.at("checkpoint").is_null());
  CHECK(report.at("note").get<std::string>().find("untrained") != std::string::npos);
}
