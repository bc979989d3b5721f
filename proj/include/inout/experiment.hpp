#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inout/classifier.hpp"
#include "inout/diffusion.hpp"
#include "inout/evaluation.hpp"
#include "inout/mixer.hpp"
#include "inout/region_augment.hpp"
#include "inout/synthetic.hpp"

namespace inout {

// Either a dataset directory written by save_dataset or a synthetic recipe.
struct DatasetSource {
  std::string dataset_dir;
  std::optional<SyntheticConfig> synthetic;
};

struct BackendSpec {
  ToyDenoiserConfig toy;
  PretrainConfig pretrain;
  std::uint64_t init_seed = 0;
  std::string checkpoint;  // pretrained denoiser archive; empty: pretrain on train negatives
};

struct ExperimentConfig {
  DatasetSource dataset;
  Scenario scenario = Scenario::n_shot;
  int shots = 5;
  std::uint64_t shot_seed = 0;
  std::vector<Policy> policies{Policy::inout};
  std::vector<int> n_aug{0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  std::vector<std::string> prompts{"skt background cracked", "skt background scratched"};
  BackendSpec backend;
  FinetuneConfig finetune;
  // Negatives used as instance images in the zero-shot scenario.
  int zero_shot_instances = 50;
  RegionAugmentConfig region;
  TrainConfig train;
  double threshold = 0.5;
  std::string output_dir = "runs/experiment";
  int workers = 1;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// INOUT_OUTPUT_DIR and INOUT_DATASET_DIR replace the corresponding paths.
void apply_env_overrides(ExperimentConfig& config);

struct CellResult {
  Policy policy = Policy::inout;
  int n_aug = 0;
  std::uint64_t seed = 0;
  MetricsTriple metrics;
  bool no_predictions = false;
  std::string directory;
  std::string manifest_hash;
  bool cached = false;
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<CellResult> cells;
  std::string dataset_hash;
  std::string backend_id;
  std::string adapter_digest;
};

// Runs every (policy, N_aug, seed) cell, one directory per cell under
// output_dir/cells, and writes report.csv, report.txt and provenance.json.
// Cells whose recorded inputs match are reused without recomputation.
ExperimentResult run_experiment(const ExperimentConfig& config);

// "<policy>_<n_aug>_seed<seed>"
std::string cell_name(Policy policy, int n_aug, std::uint64_t seed);

}  // namespace inout
