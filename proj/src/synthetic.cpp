#include "inout/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "inout/errors.hpp"
#include "inout/rng.hpp"

namespace inout {

void SyntheticConfig::validate() const {
  if (resolution.width < 8 || resolution.height < 8) throw ConfigError("synthetic: resolution too small");
  if (train_negatives < 0 || train_positives < 0 || test_negatives < 0 || test_positives < 0) {
    throw ConfigError("synthetic: counts must be non-negative");
  }
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  if (j.contains("resolution")) {
    c.resolution = {j["resolution"].at(0).get<int>(), j["resolution"].at(1).get<int>()};
  }
  c.train_negatives = j.value("train_negatives", c.train_negatives);
  c.train_positives = j.value("train_positives", c.train_positives);
  c.test_negatives = j.value("test_negatives", c.test_negatives);
  c.test_positives = j.value("test_positives", c.test_positives);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json SyntheticConfig::to_json() const {
  return {{"resolution", {resolution.width, resolution.height}},
          {"train_negatives", train_negatives},
          {"train_positives", train_positives},
          {"test_negatives", test_negatives},
          {"test_positives", test_positives},
          {"seed", seed}};
}

Image striped_texture(Resolution resolution, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double period = 6.0 + 4.0 * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double contrast = 0.12 + 0.06 * u(rng);
  const double level = 0.45 + 0.1 * u(rng);
  const double tilt = (u(rng) - 0.5) * 0.1;
  std::normal_distribution<double> grain(0.0, 0.02);
  Image img(resolution.width, resolution.height, 3);
  for (int y = 0; y < resolution.height; ++y) {
    for (int x = 0; x < resolution.width; ++x) {
      const double s = std::sin(2.0 * std::numbers::pi * (y + tilt * x) / period + phase);
      const float v = static_cast<float>(std::clamp(level + contrast * s + grain(rng), 0.0, 1.0));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  }
  return img;
}

Image add_blemish(const Image& image, std::uint64_t seed, Mask& mask) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int w = image.width, h = image.height;
  mask = Mask(w, h);
  Image out = image;
  const double shift = (u(rng) < 0.5 ? -1.0 : 1.0) * (0.3 + 0.15 * u(rng));
  auto paint = [&](int y, int x, double weight) {
    if (x < 0 || y < 0 || x >= w || y >= h || weight <= 0) return;
    for (int c = 0; c < image.channels; ++c) {
      out.at(y, x, c) = static_cast<float>(std::clamp(out.at(y, x, c) + shift * weight, 0.0, 1.0));
    }
    mask.at(y, x) = 1;
  };
  if (u(rng) < 0.5) {
    // Soft elliptical spot.
    const double cx = 4 + (w - 8) * u(rng), cy = 6 + (h - 12) * u(rng);
    const double rx = 1.5 + 2.5 * u(rng), ry = 1.5 + 3.5 * u(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = std::hypot((x - cx) / rx, (y - cy) / ry);
        if (d < 1.0) paint(y, x, 1.0 - 0.5 * d * d);
      }
    }
  } else {
    // Thin scratch.
    const double x0 = 2 + (w - 4) * u(rng), y0 = 4 + (h - 8) * u(rng);
    const double angle = std::numbers::pi * u(rng);
    const double length = 8 + 14 * u(rng);
    const int steps = static_cast<int>(length * 2);
    for (int i = 0; i <= steps; ++i) {
      const double t = length * (static_cast<double>(i) / steps - 0.5);
      const int x = static_cast<int>(std::lround(x0 + t * std::cos(angle)));
      const int y = static_cast<int>(std::lround(y0 + t * std::sin(angle)));
      if (x >= 0 && y >= 0 && x < w && y < h && !mask.at(y, x)) paint(y, x, 1.0);
    }
  }
  if (mask.count() == 0) {
    // Degenerate placement: mark the centre pixel.
    paint(h / 2, w / 2, 1.0);
  }
  return out;
}

namespace {

struct Planned {
  Split split;
  Label label;
  int index;
};

std::vector<Planned> plan(const SyntheticConfig& c) {
  std::vector<Planned> out;
  auto add = [&](Split s, Label l, int n) {
    for (int i = 0; i < n; ++i) out.push_back({s, l, i});
  };
  add(Split::train, Label::negative, c.train_negatives);
  add(Split::train, Label::positive, c.train_positives);
  add(Split::test, Label::negative, c.test_negatives);
  add(Split::test, Label::positive, c.test_positives);
  return out;
}

std::string name_of(const Planned& p) {
  return std::string(to_string(p.split)) + "_" + std::string(to_string(p.label)) + "_" + std::to_string(p.index);
}

std::uint64_t seed_of(const SyntheticConfig& c, const Planned& p, std::string_view what) {
  const std::string tag = std::string(what) + ":" + name_of(p);
  return derive_seed(c.seed, tag);
}

}  // namespace

DatasetManifest make_synthetic_dataset(const SyntheticConfig& config) {
  config.validate();
  std::vector<Sample> samples;
  for (const auto& p : plan(config)) {
    Image img = striped_texture(config.resolution, seed_of(config, p, "texture"));
    if (p.label == Label::positive) {
      Mask mask;
      img = add_blemish(img, seed_of(config, p, "blemish"), mask);
    }
    samples.push_back(make_sample(name_of(p), quantize8(img), p.label, Source::original, p.split));
  }
  return DatasetManifest(std::move(samples), config.resolution, {{"synthetic", config.to_json()}});
}

void write_image_tree(const std::filesystem::path& root, const SyntheticConfig& config) {
  config.validate();
  for (const auto& p : plan(config)) {
    const auto dir = root / std::string(to_string(p.split));
    std::filesystem::create_directories(dir);
    Image img = striped_texture(config.resolution, seed_of(config, p, "texture"));
    Mask mask(img.width, img.height);
    if (p.label == Label::positive) img = add_blemish(img, seed_of(config, p, "blemish"), mask);
    const std::string stem = name_of(p);
    write_png(dir / (stem + ".png"), img);
    write_png(dir / (stem + "_GT.png"), mask);
  }
}

}  // namespace inout
