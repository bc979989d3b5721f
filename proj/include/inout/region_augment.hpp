#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inout/image.hpp"
#include "inout/manifest.hpp"

namespace inout {

// Thresholded Perlin noise. Lattice periods are drawn per axis from
// [period_min, period_max] and stretched along the longer side so blobs stay
// roughly isotropic on tall strips.
struct PerlinMaskSpec {
  int period_min = 2;
  int period_max = 6;
  // ~5% of pixels exceed this value on average at the default periods.
  double threshold = 0.36;
  double coverage_min = 0.005;
  double coverage_max = 0.25;
  int max_retries = 64;

  void validate() const;
  static PerlinMaskSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct TransformSpec {
  double mirror_prob = 0.5;
  double rotation_min = -5.0;  // degrees
  double rotation_max = 5.0;
  double brightness_min = -0.1;  // multiplicative factor 1 + delta
  double brightness_max = 0.1;
  double saturation_min = -0.1;
  double saturation_max = 0.1;
  double hue_min = -0.02;  // fraction of a full hue turn
  double hue_max = 0.02;

  void validate() const;
  static TransformSpec identity();
  static TransformSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Raw Perlin field in roughly [-0.71, 0.71]; `periods_x`/`periods_y` lattice cells per axis.
std::vector<float> perlin_field(int width, int height, int periods_x, int periods_y, std::uint64_t seed);

// Throws MaskGenerationError when no attempt lands inside the coverage bounds.
Mask generate_perlin_mask(const PerlinMaskSpec& spec, int width, int height, std::uint64_t seed);

Image apply_standard_transforms(const Image& image, const TransformSpec& spec, std::uint64_t seed);

class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  // A textured patch of the requested size and the image's channel count.
  virtual Image patch(int width, int height, int channels, std::uint64_t seed) const = 0;
};

// Multi-octave value noise with a random tint per patch.
class ValueNoiseSource final : public NoiseSource {
 public:
  Image patch(int width, int height, int channels, std::uint64_t seed) const override;
};

// Crops/resizes textures loaded from a directory of PNG files.
class TextureDirectorySource final : public NoiseSource {
 public:
  explicit TextureDirectorySource(const std::filesystem::path& dir);
  Image patch(int width, int height, int channels, std::uint64_t seed) const override;

 private:
  std::vector<Image> textures_;
};

// Convex blend on mask pixels only: out = (1 - beta) * image + beta * noise.
// Off-mask pixels are copied untouched. Rejects an all-zero mask.
Image blend_region(const Image& image, const Mask& mask, const Image& noise, double beta);
Sample superimpose(const Image& image, const Mask& mask, const Image& noise, double beta, std::string id,
                   Split split = Split::train);

struct RegionAugmentConfig {
  PerlinMaskSpec mask;
  TransformSpec transforms;
  double beta_min = 0.5;
  double beta_max = 1.0;
  std::string texture_dir;  // empty: synthesized value noise

  void validate() const;
  static RegionAugmentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct RegionAugmentResult {
  Sample sample;
  Mask mask;
  double beta = 0;
  Image base;  // the transformed negative the region was pasted onto
};

// Transforms the base image, then superimposes a noise region on it.
RegionAugmentResult augment_region(const Image& negative, const RegionAugmentConfig& config, const NoiseSource& noise,
                                   std::uint64_t seed, std::string id);

std::unique_ptr<NoiseSource> make_noise_source(const RegionAugmentConfig& config);

}  // namespace inout
