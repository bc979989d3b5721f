#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inout/image.hpp"
#include "inout/lora.hpp"
#include "inout/manifest.hpp"

namespace inout {

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 0.01;
  int batch_size = 5;
  double momentum = 0.0;
  std::string backbone = "small_cnn";
  std::uint64_t seed = 0;

  void validate() const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Binary image classifier: conv(3->8) pool conv(8->16) pool conv(16->16),
// global max+mean pooling, linear head, sigmoid. Trained from image-level
// labels only.
class DefectClassifier {
 public:
  DefectClassifier(std::string backbone, Resolution resolution, std::uint64_t seed);
  DefectClassifier(std::string backbone, Resolution resolution, WeightSet weights);

  double score(const Image& image) const;
  const WeightSet& weights() const { return weights_; }
  WeightSet& mutable_weights() { return weights_; }
  Resolution resolution() const { return resolution_; }
  const std::string& backbone() const { return backbone_; }

  // Binary cross-entropy on one image; accumulates scale * dLoss/dW into grads.
  double loss_and_grad(const Image& image, float target, WeightSet& grads, float scale) const;

  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  static DefectClassifier load(const std::filesystem::path& path);

 private:
  std::string backbone_;
  Resolution resolution_;
  WeightSet weights_;
};

std::vector<std::string> available_backbones();

// SGD on the train split of `dataset`. Only pixels and image-level labels are read.
DefectClassifier train_classifier(const DatasetManifest& dataset, const TrainConfig& config);

struct ClassifierRunResult {
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::vector<int> labels;
  std::uint64_t seed = 0;
  std::string train_manifest_hash;
};

// Scores every test-split sample in manifest order.
ClassifierRunResult predict_scores(const DefectClassifier& model, const DatasetManifest& manifest);

void write_scores(const std::filesystem::path& path, const ClassifierRunResult& result);
ClassifierRunResult read_scores(const std::filesystem::path& path);

}  // namespace inout
