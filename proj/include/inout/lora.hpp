#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace inout {

using Matrix = Eigen::MatrixXf;

// Named parameter matrices of a model. Convolution kernels are stored
// flattened to (out_channels) x (in_channels * k * k); biases as n x 1.
using WeightSet = std::map<std::string, Matrix>;

struct LayerShape {
  std::string name;
  int rows = 0;  // d_out
  int cols = 0;  // d_in
};

std::vector<LayerShape> layer_shapes(const WeightSet& weights, const std::vector<std::string>& names);

class MergeWeight {
 public:
  explicit MergeWeight(double alpha);
  double value() const { return alpha_; }

 private:
  double alpha_;
};

// Low-rank update for one layer: delta = scale * up * down.
struct LoraEntry {
  Matrix down;  // r x d_in
  Matrix up;    // d_out x r
  float scale = 1.0f;

  Eigen::MatrixXd delta() const;
  friend bool operator==(const LoraEntry& a, const LoraEntry& b) {
    return a.scale == b.scale && a.down == b.down && a.up == b.up;
  }
};

struct LoraAdapter {
  int rank = 0;
  std::map<std::string, LoraEntry> entries;
  // base_model_id, training_config_digest, and any caller-supplied keys.
  nlohmann::json metadata = nlohmann::json::object();

  std::string digest() const;
  friend bool operator==(const LoraAdapter& a, const LoraAdapter& b) {
    return a.rank == b.rank && a.entries == b.entries && a.metadata == b.metadata;
  }
};

// `lora_alpha / rank` scaling is folded into the stored scale, so the merge
// rule stays W + alpha * scale * up * down.
LoraAdapter init_adapter(const std::vector<LayerShape>& shapes, int rank, std::uint64_t seed, float lora_alpha = 0.0f);

// Returns a new weight set; adapted layers get W + alpha * scale * up * down,
// others are copied. Shape or name mismatch raises MergeError.
WeightSet merge(const WeightSet& base, const LoraAdapter& adapter, MergeWeight alpha);

// Number of singular values of the update above `tolerance`.
int numerical_rank(const Eigen::MatrixXd& m, double tolerance = 1e-9);

inline constexpr int kAdapterFormatVersion = 1;

void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path);
// Raises LoadError on truncated, corrupt or version-mismatched files.
LoraAdapter load_adapter(const std::filesystem::path& path);

}  // namespace inout
