#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "inout/image.hpp"
#include "inout/manifest.hpp"

namespace inout {

// Small striped-texture surface dataset with injected blemish defects.
struct SyntheticConfig {
  Resolution resolution{32, 96};
  int train_negatives = 480;
  int train_positives = 10;
  int test_negatives = 120;
  int test_positives = 60;
  std::uint64_t seed = 0;

  void validate() const;
  static SyntheticConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Horizontal sinusoidal stripes with random period, phase, contrast, level and grain.
Image striped_texture(Resolution resolution, std::uint64_t seed);

// Paints a dark or bright spot or a thin scratch onto `image`; the touched
// pixels are reported in `mask`.
Image add_blemish(const Image& image, std::uint64_t seed, Mask& mask);

// Samples are named "<split>_<label>_<index>".
DatasetManifest make_synthetic_dataset(const SyntheticConfig& config);

// Writes <root>/train and <root>/test with <stem>.png and <stem>_GT.png masks.
void write_image_tree(const std::filesystem::path& root, const SyntheticConfig& config);

}  // namespace inout
