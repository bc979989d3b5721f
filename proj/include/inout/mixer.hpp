#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inout/manifest.hpp"
#include "inout/region_augment.hpp"

namespace inout {

enum class Scenario { zero_shot, n_shot };
enum class Policy { inout, diffusion_only, region_only };

std::string_view to_string(Scenario s);
std::string_view to_string(Policy p);
Scenario parse_scenario(std::string_view text);
Policy parse_policy(std::string_view text);

struct AugmentationPlan {
  Scenario scenario = Scenario::zero_shot;
  int shots = 0;  // N: original positives kept in the train split
  int n_aug = 0;
  Policy policy = Policy::inout;
  std::vector<std::string> prompts{"skt background cracked", "skt background scratched"};
  std::uint64_t seed = 0;
  // The positives used for fine-tuning; selected by seed when empty.
  std::vector<std::string> shot_ids;

  void validate() const;
  static AugmentationPlan from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// (prompt, count, seed) -> `count` diffusion positives.
using DiffusionGenerator = std::function<std::vector<Sample>(const std::string& prompt, int count, std::uint64_t seed)>;
// (count, seed) -> `count` region positives.
using RegionGenerator = std::function<std::vector<Sample>(int count, std::uint64_t seed)>;

// Region positives from train-split negatives of `manifest`, base image chosen per sample by seed.
RegionGenerator make_region_generator(const DatasetManifest& manifest, RegionAugmentConfig config);

// Serves pre-made positives (for example an exported review pool) instead of
// sampling; each call draws `count` distinct pool entries chosen by seed.
DiffusionGenerator make_pool_generator(std::vector<Sample> pool);

// Deterministic choice of `count` train positives.
std::vector<std::string> select_shot_ids(const DatasetManifest& manifest, int count, std::uint64_t seed);

// Train split: N_aug/2 diffusion + N_aug/2 region positives (or all N_aug
// from one source) plus every original train negative. Test split copied.
DatasetManifest build_zero_shot(const DatasetManifest& manifest, const AugmentationPlan& plan,
                                const DiffusionGenerator& diffusion_gen, const RegionGenerator& region_gen);

// As build_zero_shot plus the N original positives named by the plan.
DatasetManifest build_n_shot(const DatasetManifest& manifest, const AugmentationPlan& plan,
                             const DiffusionGenerator& diffusion_gen, const RegionGenerator& region_gen);

DatasetManifest build_dataset(const DatasetManifest& manifest, const AugmentationPlan& plan,
                              const DiffusionGenerator& diffusion_gen, const RegionGenerator& region_gen);

}  // namespace inout
