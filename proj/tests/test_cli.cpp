#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "inout/classifier.hpp"
#include "inout/evaluation.hpp"
#include "inout/lora.hpp"
#include "inout/manifest.hpp"
#include "oracles.hpp"

#ifndef INOUT_CLI_PATH
#error "INOUT_CLI_PATH must name the CLI binary"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + INOUT_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  const fs::path dir = oracle::scratch_dir("cli_usage");
  CHECK(cli("", dir).code == 2);
  CHECK(cli("frobnicate", dir).code == 2);
  CHECK(cli("evaluate --scores a.csv --bogus", dir).code == 2);
  CHECK(cli("evaluate --scores a.csv --format xml", dir).code == 2);
  CHECK(cli("--help", dir).code == 0);
}

TEST_CASE("validation errors exit with status 1 and a message") {
  const fs::path dir = oracle::scratch_dir("cli_validation");
  const Run r = cli("build-dataset --n-aug 3 --policy inout --dataset nowhere", dir);
  CHECK(r.code == 1);
  CHECK(r.output.find("even") != std::string::npos);
  CHECK(cli("evaluate --scores " + (dir / "missing.csv").string(), dir).code == 1);
}

TEST_CASE("end-to-end chain through the CLI") {
  const fs::path dir = oracle::scratch_dir("cli_chain");
  write(dir / "synthetic.json",
        R"({"resolution": [16, 32], "train_negatives": 16, "train_positives": 4, "test_negatives": 8, "test_positives": 6, "seed": 2})");
  write(dir / "tiny.json", R"({
    "backend": {"toy": {"channels": 4, "timesteps": 8}, "pretrain": {"epochs": 1}},
    "finetune": {"num_regularization_images": 2, "rank": 2, "learning_rate": 0.05},
    "train": {"epochs": 2, "learning_rate": 0.02, "momentum": 0.9}
  })");
  const std::string d = dir.string();

  Run r = cli("make-synthetic --config " + d + "/synthetic.json --out " + d + "/data", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(inout::load_dataset_dir(dir / "data").size() == 34);

  r = cli("make-synthetic --config " + d + "/synthetic.json --tree --out " + d + "/tree", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = cli("ingest --root " + d + "/tree --width 16 --height 32 --out " + d + "/ingested", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(inout::load_dataset_dir(dir / "ingested").counts(inout::Split::test).positive == 6);

  r = cli("finetune --config " + d + "/tiny.json --dataset " + d + "/data --backend " + d + "/denoiser.safetensors --epochs 2 --count 3 --out " +
              d + "/adapter.safetensors",
          dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("epoch 2 probe loss") != std::string::npos);
  CHECK(inout::load_adapter(dir / "adapter.safetensors").rank == 2);

  r = cli("generate --backend " + d + "/denoiser.safetensors --adapter " + d +
              "/adapter.safetensors --prompt \"skt background scratched\" --count 50 --alpha 0.60 --width 16 --height 32 --out " + d +
              "/generated",
          dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const inout::DatasetManifest gen = inout::load_dataset_dir(dir / "generated");
  CHECK(gen.size() == 50);
  CHECK(gen.metadata().at("alpha") == 0.6);

  r = cli("augment-region --dataset " + d + "/data --count 4 --masks --out " + d + "/region", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(inout::load_dataset_dir(dir / "region").size() == 4);
  CHECK(fs::exists(dir / "region" / "masks" / "region_0.png"));

  r = cli("build-dataset --config " + d + "/tiny.json --dataset " + d + "/data --backend " + d + "/denoiser.safetensors --adapter " + d +
              "/adapter.safetensors --n 2 --n-aug 4 --policy inout --prompt \"skt background\" --out " + d + "/built",
          dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const inout::DatasetManifest built = inout::load_dataset_dir(dir / "built");
  CHECK(built.counts(inout::Split::train).positive == 6);
  CHECK(built.counts(inout::Split::train).negative == 16);

  r = cli("build-dataset --dataset " + d + "/data --pool " + d + "/generated --n-aug 4 --policy diffusion_only --out " + d + "/pooled", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(inout::load_dataset_dir(dir / "pooled").counts(inout::Split::train).positive == 4);

  r = cli("train --config " + d + "/tiny.json --dataset " + d + "/built --seed 3 --out " + d + "/clf.safetensors --scores " + d +
              "/scores.csv",
          dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(inout::read_scores(dir / "scores.csv").scores.size() == 14);

  r = cli("evaluate --scores " + d + "/scores.csv --scores " + d + "/scores.csv --method inout --n-aug 4 --format csv --out " + d +
              "/report.csv",
          dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  std::ifstream in(dir / "report.csv");
  const inout::MetricsReport report =
      inout::parse_report(std::string((std::istreambuf_iterator<char>(in)), {}), inout::ReportFormat::csv);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].num_seeds == 2);
  CHECK(report.rows[0].std.ap == 0.0);
}

TEST_CASE("run-experiment honours flag overrides") {
  const fs::path dir = oracle::scratch_dir("cli_experiment");
  write(dir / "exp.json", R"({
    "dataset": {"synthetic": {"resolution": [16, 32], "train_negatives": 12, "train_positives": 3,
                              "test_negatives": 6, "test_positives": 4}},
    "scenario": "n_shot", "N": 2, "policies": ["region_only"], "n_aug": [2],
    "train": {"epochs": 1}, "output_dir": "ignored"
  })");
  const Run r = cli("run-experiment --config " + dir.string() + "/exp.json --output-dir " + dir.string() +
                        "/out --seeds 4 --workers 1",
                    dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(dir / "out" / "cells" / "region_only_2_seed4" / "cell.json"));
  CHECK(r.output.find("Average") != std::string::npos);
}
