#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "inout/image.hpp"
#include "inout/lora.hpp"
#include "inout/manifest.hpp"
#include "inout/rng.hpp"

namespace inout {

using Embedding = Eigen::VectorXf;

// What a diffusion model must offer for adapter fine-tuning and sampling.
// Implementations keep their base weights immutable; every call takes the
// (possibly merged) weights to run with.
class DiffusionBackend {
 public:
  virtual ~DiffusionBackend() = default;

  virtual std::string model_id() const = 0;
  virtual const WeightSet& base_weights() const = 0;
  virtual std::vector<std::string> adaptable_layers() const = 0;
  virtual Embedding encode_prompt(std::string_view prompt) const = 0;

  // Noise-prediction MSE for `image` at a timestep drawn from `rng`. When
  // `grads` is non-null, grad_scale * dLoss/dW is accumulated into it.
  virtual double denoise_loss(const WeightSet& weights, const Image& image, const Embedding& cond, Rng& rng,
                              WeightSet* grads, float grad_scale = 1.0f) const = 0;

  virtual Image sample(const WeightSet& weights, const Embedding& cond, Resolution resolution,
                       std::uint64_t seed) const = 0;
};

struct ToyDenoiserConfig {
  int channels = 16;
  int time_dim = 16;
  int prompt_dim = 16;
  int timesteps = 50;
  double beta_start = 1e-3;
  double beta_end = 0.2;

  static ToyDenoiserConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct PretrainConfig {
  std::string prompt = "background";
  int epochs = 4;
  double learning_rate = 2e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;

  static PretrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Small fully convolutional noise predictor over grayscale images, conditioned
// on a sinusoidal timestep code and a bag-of-tokens prompt code. Prompt
// tokens map to fixed pseudo-random vectors keyed by the token string, so an
// identifier such as "skt" is an opaque conditioning key.
class ToyDiffusionBackend final : public DiffusionBackend {
 public:
  ToyDiffusionBackend(ToyDenoiserConfig config, std::uint64_t init_seed);
  ToyDiffusionBackend(ToyDenoiserConfig config, WeightSet weights);

  static ToyDiffusionBackend load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Full-parameter training of the base model; returns per-epoch mean loss.
  std::vector<double> pretrain(std::span<const Image> images, const PretrainConfig& config);

  std::string model_id() const override;
  const WeightSet& base_weights() const override { return weights_; }
  std::vector<std::string> adaptable_layers() const override;
  Embedding encode_prompt(std::string_view prompt) const override;
  double denoise_loss(const WeightSet& weights, const Image& image, const Embedding& cond, Rng& rng, WeightSet* grads,
                      float grad_scale = 1.0f) const override;
  Image sample(const WeightSet& weights, const Embedding& cond, Resolution resolution,
               std::uint64_t seed) const override;

  const ToyDenoiserConfig& config() const { return config_; }
  double alpha_bar(int t) const { return alpha_bar_[static_cast<std::size_t>(t)]; }

 private:
  Matrix predict_noise(const WeightSet& weights, const Matrix& noisy, int height, int width, int t,
                       const Embedding& cond) const;
  Embedding condition(int t, const Embedding& prompt) const;

  ToyDenoiserConfig config_;
  WeightSet weights_;
  std::vector<double> betas_;
  std::vector<double> alpha_bar_;
};

struct FinetuneConfig {
  std::string instance_prompt = "skt background";
  std::string class_prompt = "background";
  double prior_weight = 1.0;
  int epochs = 5;
  double learning_rate = 1e-5;
  double alpha_default = 0.6;
  int num_regularization_images = 50;
  int rank = 8;
  float lora_alpha = 0.0f;  // 0: scale 1
  // Named for external backends; the toy backend always runs plain SGD.
  std::string optimizer = "sgd";
  std::uint64_t seed = 0;

  void validate() const;
  std::string digest() const;
  static FinetuneConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Scenario presets: zero_shot, few_shot, full_shot.
struct ScenarioPreset {
  std::string name;
  int instance_count = 0;
  bool instances_are_positive = false;
  int epochs = 0;
  double alpha = 0.0;
};
ScenarioPreset scenario_preset(std::string_view name);

struct FinetuneResult {
  LoraAdapter adapter;
  // Instance-set denoising loss after each epoch, measured at fixed
  // timestep/noise draws so epochs are comparable.
  std::vector<double> epoch_losses;
  // Mean training objective (instance + weighted prior term) per epoch.
  std::vector<double> train_losses;
};

inline constexpr int kProbeDrawsPerImage = 4;

// Images generated from the class prompt with the un-adapted base weights.
// When `cache_dir` is given the set is stored there keyed by everything that
// determines it, and reused on later calls.
std::vector<Image> prepare_regularization_set(const DiffusionBackend& backend, std::string_view class_prompt, int count,
                                              std::uint64_t seed, Resolution resolution,
                                              const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

// Dreambooth-style adapter training: per step, instance denoising loss on one
// instance image plus prior_weight times the loss on one regularization
// image. Base weights are never modified.
FinetuneResult finetune(const DiffusionBackend& backend, std::span<const Image> instance_images,
                        std::span<const Image> regularization_images, const FinetuneConfig& config);

struct GenerationRequest {
  std::string prompt;
  int count = 0;
  std::uint64_t seed = 0;
  Resolution resolution{32, 96};
  Label label = Label::positive;
};

// Merges the adapter at `alpha` (none: base model) and samples request.count images.
std::vector<Sample> generate(const DiffusionBackend& backend, const LoraAdapter* adapter, MergeWeight alpha,
                             const GenerationRequest& request);

}  // namespace inout
