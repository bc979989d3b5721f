#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "inout/errors.hpp"
#include "inout/experiment.hpp"
#include "oracles.hpp"

using namespace inout;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c;
  SyntheticConfig s;
  s.resolution = {16, 32};
  s.train_negatives = 16;
  s.train_positives = 4;
  s.test_negatives = 8;
  s.test_positives = 6;
  c.dataset.synthetic = s;
  c.scenario = Scenario::n_shot;
  c.shots = 2;
  c.policies = {Policy::region_only};
  c.n_aug = {0, 2, 4};
  c.seeds = {0, 1};
  c.train.epochs = 2;
  c.train.momentum = 0.9;
  c.train.learning_rate = 0.02;
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("cell names") { CHECK(cell_name(Policy::inout, 40, 3) == "inout_40_seed3"); }

TEST_CASE("a small grid produces one row per cell group plus an Average row") {
  const fs::path out = oracle::scratch_dir("experiment_grid");
  const ExperimentConfig c = small_config(out);
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.report.rows.size() == 3);
  CHECK(r.cells.size() == 6);
  for (const auto& row : r.report.rows) CHECK(row.num_seeds == 2);
  CHECK(r.report.rows[0].n_aug == 0);
  CHECK(r.report.rows[2].n_aug == 4);
  const std::string csv = slurp(out / "report.csv");
  CHECK(csv.find("Average") != std::string::npos);
  CHECK(parse_report(csv, ReportFormat::csv).rows.size() == 3);
  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "provenance.json"));
  for (const auto& cell : r.cells) {
    CHECK_FALSE(cell.cached);
    CHECK(fs::exists(fs::path(cell.directory) / "cell.json"));
    CHECK(fs::exists(fs::path(cell.directory) / "scores.csv"));
    const DatasetManifest m = read_manifest(fs::path(cell.directory) / "manifest.jsonl");
    CHECK(m.counts(Split::train).positive == static_cast<std::size_t>(2 + cell.n_aug));
    CHECK(m.content_hash() == cell.manifest_hash);
  }
  CHECK(r.backend_id.empty());

  SUBCASE("a rerun reuses every cell and reproduces the report") {
    const ExperimentResult again = run_experiment(c);
    for (const auto& cell : again.cells) CHECK(cell.cached);
    CHECK(slurp(out / "report.csv") == csv);
  }
  SUBCASE("changing the classifier config recomputes") {
    ExperimentConfig d = c;
    d.train.epochs = 1;
    for (const auto& cell : run_experiment(d).cells) CHECK_FALSE(cell.cached);
  }
}

TEST_CASE("a single seed reports zero spread") {
  const fs::path out = oracle::scratch_dir("experiment_single");
  ExperimentConfig c = small_config(out);
  c.n_aug = {2};
  c.seeds = {5};
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.report.rows.size() == 1);
  CHECK(r.report.rows[0].std.ap == 0.0);
  CHECK(r.report.rows[0].std.precision == 0.0);
  CHECK(r.report.rows[0].std.recall == 0.0);
  CHECK(r.report.rows[0].mean.ap == r.cells[0].metrics.ap);
}

TEST_CASE("diffusion cells run with a tiny backend") {
  const fs::path out = oracle::scratch_dir("experiment_diffusion");
  ExperimentConfig c = small_config(out);
  c.policies = {Policy::inout};
  c.n_aug = {2};
  c.seeds = {0};
  c.prompts = {"skt background"};
  c.backend.toy.channels = 4;
  c.backend.toy.timesteps = 8;
  c.backend.pretrain.epochs = 1;
  c.finetune.epochs = 1;
  c.finetune.rank = 2;
  c.finetune.num_regularization_images = 2;
  c.finetune.learning_rate = 0.05;
  const ExperimentResult r = run_experiment(c);
  CHECK_FALSE(r.backend_id.empty());
  CHECK_FALSE(r.adapter_digest.empty());
  const DatasetManifest m = read_manifest(fs::path(r.cells[0].directory) / "manifest.jsonl");
  std::size_t diffusion = 0, region = 0;
  for (const auto& s : m.samples()) {
    diffusion += s.source == Source::diffusion;
    region += s.source == Source::region;
  }
  CHECK(diffusion == 1);
  CHECK(region == 1);
  // Backend and adapter caches are reused on a second run.
  const ExperimentResult again = run_experiment(c);
  CHECK(again.adapter_digest == r.adapter_digest);
  CHECK(again.cells[0].cached);
}

TEST_CASE("a failing cell names its stage and seed and leaves a partial report") {
  const fs::path out = oracle::scratch_dir("experiment_fail");
  ExperimentConfig c = small_config(out);
  c.scenario = Scenario::zero_shot;
  c.shots = 0;
  c.n_aug = {2, 0};
  c.seeds = {3};
  try {
    run_experiment(c);
    FAIL("expected a StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "region_only_0_seed3:train");
    CHECK(e.seed() == 3);
    CHECK(std::string(e.what()).find("both classes") != std::string::npos);
  }
  const MetricsReport partial = parse_report(slurp(out / "report.partial.csv"), ReportFormat::csv);
  REQUIRE(partial.rows.size() == 1);
  CHECK(partial.rows[0].n_aug == 2);
}

TEST_CASE("config parsing, validation and environment overrides") {
  const fs::path dir = oracle::scratch_dir("experiment_config");
  const ExperimentConfig c = small_config(dir / "out");
  CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());
  nlohmann::json j = c.to_json();
  j.erase("dataset");
  j["dataset"] = {{"dataset_dir", "data"}};
  {
    std::ofstream f(dir / "exp.json");
    f << "// toy grid\n" << j.dump(2);
  }
  const ExperimentConfig loaded = load_experiment_config(dir / "exp.json");
  CHECK(loaded.dataset.dataset_dir == (dir / "data").string());

  nlohmann::json bad = c.to_json();
  bad["n_aug"] = {3};
  bad["policies"] = {"inout"};
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ValidationError);
  bad = c.to_json();
  bad["seeds"] = nlohmann::json::array();
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(dir / "missing.json"), ConfigError);

  ExperimentConfig e = c;
  setenv("INOUT_OUTPUT_DIR", "/tmp/elsewhere", 1);
  setenv("INOUT_DATASET_DIR", "/tmp/data", 1);
  apply_env_overrides(e);
  unsetenv("INOUT_OUTPUT_DIR");
  unsetenv("INOUT_DATASET_DIR");
  CHECK(e.output_dir == "/tmp/elsewhere");
  CHECK(e.dataset.dataset_dir == "/tmp/data");
  CHECK_FALSE(e.dataset.synthetic.has_value());
}
