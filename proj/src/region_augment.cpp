#include "inout/region_augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "inout/errors.hpp"
#include "inout/rng.hpp"

namespace inout {

void PerlinMaskSpec::validate() const {
  if (period_min < 1 || period_min > period_max) throw ConfigError("perlin: need 1 <= period_min <= period_max");
  if (!(coverage_min >= 0 && coverage_min < coverage_max && coverage_max <= 1)) {
    throw ConfigError("perlin: need 0 <= coverage_min < coverage_max <= 1");
  }
  if (max_retries < 1) throw ConfigError("perlin: max_retries must be >= 1");
}

PerlinMaskSpec PerlinMaskSpec::from_json(const nlohmann::json& j) {
  PerlinMaskSpec s;
  if (j.contains("grid_period_range")) {
    s.period_min = j["grid_period_range"].at(0).get<int>();
    s.period_max = j["grid_period_range"].at(1).get<int>();
  }
  s.threshold = j.value("threshold", s.threshold);
  if (j.contains("coverage_bounds")) {
    s.coverage_min = j["coverage_bounds"].at(0).get<double>();
    s.coverage_max = j["coverage_bounds"].at(1).get<double>();
  }
  s.max_retries = j.value("max_retries", s.max_retries);
  s.validate();
  return s;
}

nlohmann::json PerlinMaskSpec::to_json() const {
  return {{"grid_period_range", {period_min, period_max}},
          {"threshold", threshold},
          {"coverage_bounds", {coverage_min, coverage_max}},
          {"max_retries", max_retries}};
}

void TransformSpec::validate() const {
  if (!(mirror_prob >= 0 && mirror_prob <= 1)) throw ConfigError("transforms: mirror_prob outside [0,1]");
  if (rotation_min > rotation_max || brightness_min > brightness_max || saturation_min > saturation_max ||
      hue_min > hue_max) {
    throw ConfigError("transforms: range bounds out of order");
  }
  if (brightness_min <= -1 || saturation_min < -1) throw ConfigError("transforms: jitter would invert intensities");
}

TransformSpec TransformSpec::identity() {
  TransformSpec s;
  s.mirror_prob = 0;
  s.rotation_min = s.rotation_max = 0;
  s.brightness_min = s.brightness_max = 0;
  s.saturation_min = s.saturation_max = 0;
  s.hue_min = s.hue_max = 0;
  return s;
}

namespace {

void read_range(const nlohmann::json& j, const char* key, double& lo, double& hi) {
  if (j.contains(key)) {
    lo = j[key].at(0).get<double>();
    hi = j[key].at(1).get<double>();
  }
}

}  // namespace

TransformSpec TransformSpec::from_json(const nlohmann::json& j) {
  TransformSpec s;
  s.mirror_prob = j.value("mirror_prob", s.mirror_prob);
  read_range(j, "rotation_degrees_range", s.rotation_min, s.rotation_max);
  read_range(j, "brightness_range", s.brightness_min, s.brightness_max);
  read_range(j, "saturation_range", s.saturation_min, s.saturation_max);
  read_range(j, "hue_range", s.hue_min, s.hue_max);
  s.validate();
  return s;
}

nlohmann::json TransformSpec::to_json() const {
  return {{"mirror_prob", mirror_prob},
          {"rotation_degrees_range", {rotation_min, rotation_max}},
          {"brightness_range", {brightness_min, brightness_max}},
          {"saturation_range", {saturation_min, saturation_max}},
          {"hue_range", {hue_min, hue_max}}};
}

std::vector<float> perlin_field(int width, int height, int periods_x, int periods_y, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const int gx = periods_x + 1;
  std::vector<double> grad_x(static_cast<std::size_t>(gx) * (periods_y + 1));
  std::vector<double> grad_y(grad_x.size());
  for (std::size_t i = 0; i < grad_x.size(); ++i) {
    const double a = angle(rng);
    grad_x[i] = std::cos(a);
    grad_y[i] = std::sin(a);
  }
  const auto fade = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
  std::vector<float> field(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double v = (y + 0.5) * periods_y / height;
    const int cy = std::min(static_cast<int>(v), periods_y - 1);
    const double fy = v - cy;
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) * periods_x / width;
      const int cx = std::min(static_cast<int>(u), periods_x - 1);
      const double fx = u - cx;
      const auto dot = [&](int ox, int oy) {
        const std::size_t g = static_cast<std::size_t>(cy + oy) * gx + (cx + ox);
        return grad_x[g] * (fx - ox) + grad_y[g] * (fy - oy);
      };
      const double sx = fade(fx), sy = fade(fy);
      const double top = dot(0, 0) + sx * (dot(1, 0) - dot(0, 0));
      const double bottom = dot(0, 1) + sx * (dot(1, 1) - dot(0, 1));
      field[static_cast<std::size_t>(y) * width + x] = static_cast<float>(top + sy * (bottom - top));
    }
  }
  return field;
}

Mask generate_perlin_mask(const PerlinMaskSpec& spec, int width, int height, std::uint64_t seed) {
  spec.validate();
  if (width < 1 || height < 1) throw ValidationError("perlin mask: dimensions must be positive");
  double last = 0;
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    Rng rng(derive_seed(seed, "perlin-mask", static_cast<std::uint64_t>(attempt)));
    std::uniform_int_distribution<int> period(spec.period_min, spec.period_max);
    int px = period(rng);
    int py = period(rng);
    if (height > width) {
      py = std::max(1, static_cast<int>(std::lround(static_cast<double>(py) * height / width)));
    } else if (width > height) {
      px = std::max(1, static_cast<int>(std::lround(static_cast<double>(px) * width / height)));
    }
    const auto field = perlin_field(width, height, px, py, rng());
    Mask mask(width, height);
    for (std::size_t i = 0; i < field.size(); ++i) mask.bits[i] = field[i] > spec.threshold ? 1 : 0;
    last = mask.coverage();
    if (last >= spec.coverage_min && last <= spec.coverage_max) return mask;
  }
  throw MaskGenerationError("perlin mask: coverage outside bounds after " + std::to_string(spec.max_retries) +
                                " attempts (last coverage " + std::to_string(last) + ")",
                            last);
}

namespace {

Image rotate(const Image& image, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (image.width - 1) / 2.0, cy = (image.height - 1) / 2.0;
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      // Inverse map, replicate border.
      const double sx = std::clamp(c * (x - cx) + s * (y - cy) + cx, 0.0, image.width - 1.0);
      const double sy = std::clamp(-s * (x - cx) + c * (y - cy) + cy, 0.0, image.height - 1.0);
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
      const double wx = sx - x0, wy = sy - y0;
      for (int ch = 0; ch < image.channels; ++ch) {
        const double top = (1 - wx) * image.at(y0, x0, ch) + wx * image.at(y0, x1, ch);
        const double bottom = (1 - wx) * image.at(y1, x0, ch) + wx * image.at(y1, x1, ch);
        out.at(y, x, ch) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0;
  if (d <= 0) {
    h = 0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d / 6.0 + 1.0, 1.0);
  } else if (mx == g) {
    h = ((b - r) / d + 2.0) / 6.0;
  } else {
    h = ((r - g) / d + 4.0) / 6.0;
  }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = (h - std::floor(h)) * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

Image apply_standard_transforms(const Image& image, const TransformSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, "standard-transforms"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Draw every parameter unconditionally so the stream layout never depends on the spec.
  const bool mirror = unit(rng) < spec.mirror_prob;
  const double angle = std::uniform_real_distribution<double>(spec.rotation_min, spec.rotation_max)(rng);
  const double brightness = 1.0 + std::uniform_real_distribution<double>(spec.brightness_min, spec.brightness_max)(rng);
  const double saturation = 1.0 + std::uniform_real_distribution<double>(spec.saturation_min, spec.saturation_max)(rng);
  const double hue = std::uniform_real_distribution<double>(spec.hue_min, spec.hue_max)(rng);

  Image out = mirror ? flip_horizontal(image) : image;
  if (angle != 0.0) out = rotate(out, angle);
  if (brightness != 1.0) {
    for (float& v : out.pixels) v = static_cast<float>(v * brightness);
  }
  if (out.channels == 3 && (saturation != 1.0 || hue != 0.0)) {
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
      double r = out.pixels[i], g = out.pixels[i + 1], b = out.pixels[i + 2];
      if (saturation != 1.0) {
        const double gray = 0.299 * r + 0.587 * g + 0.114 * b;
        r = gray + saturation * (r - gray);
        g = gray + saturation * (g - gray);
        b = gray + saturation * (b - gray);
      }
      if (hue != 0.0) {
        double h, s, v;
        rgb_to_hsv(std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0), std::clamp(b, 0.0, 1.0), h, s, v);
        hsv_to_rgb(h + hue, s, v, r, g, b);
      }
      out.pixels[i] = static_cast<float>(r);
      out.pixels[i + 1] = static_cast<float>(g);
      out.pixels[i + 2] = static_cast<float>(b);
    }
  }
  clamp_unit(out);
  return out;
}

namespace {

// Bilinearly interpolated lattice of uniform values, `cells` lattice cells across the shorter side.
std::vector<double> value_noise(int width, int height, int cells, Rng& rng) {
  const int short_side = std::min(width, height);
  const double step = static_cast<double>(short_side) / cells;
  const int lw = static_cast<int>(std::ceil(width / step)) + 2;
  const int lh = static_cast<int>(std::ceil(height / step)) + 2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(lw) * lh);
  for (double& v : lattice) v = unit(rng);
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double fy = y / step;
    const int y0 = static_cast<int>(fy);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = x / step;
      const int x0 = static_cast<int>(fx);
      const double wx = fx - x0;
      const auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * lw + xx]; };
      const double top = (1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1);
      const double bottom = (1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1);
      out[static_cast<std::size_t>(y) * width + x] = (1 - wy) * top + wy * bottom;
    }
  }
  return out;
}

}  // namespace

Image ValueNoiseSource::patch(int width, int height, int channels, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, "value-noise"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> texture(static_cast<std::size_t>(width) * height, 0.0);
  double amplitude = 1.0, norm = 0.0;
  int cells = 2 + static_cast<int>(unit(rng) * 4);
  for (int octave = 0; octave < 4; ++octave) {
    const auto layer = value_noise(width, height, cells, rng);
    for (std::size_t i = 0; i < texture.size(); ++i) texture[i] += amplitude * layer[i];
    norm += amplitude;
    amplitude *= 0.5;
    cells *= 2;
  }
  Image out(width, height, channels);
  for (int c = 0; c < channels; ++c) {
    const double base = unit(rng);
    const double contrast = 0.6 + 0.8 * unit(rng);
    for (std::size_t i = 0; i < texture.size(); ++i) {
      const double v = base + contrast * (texture[i] / norm - 0.5);
      out.pixels[i * channels + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

TextureDirectorySource::TextureDirectorySource(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("texture directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) textures_.push_back(read_png(f));
  if (textures_.empty()) throw ConfigError("texture directory has no PNG files: " + dir.string());
}

Image TextureDirectorySource::patch(int width, int height, int channels, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, "texture-dir"));
  const Image& tex = textures_[std::uniform_int_distribution<std::size_t>(0, textures_.size() - 1)(rng)];
  const int cw = std::max(1, std::min(tex.width, tex.width / 2 + static_cast<int>(rng() % (tex.width / 2 + 1))));
  const int ch = std::max(1, std::min(tex.height, tex.height / 2 + static_cast<int>(rng() % (tex.height / 2 + 1))));
  const int x0 = static_cast<int>(rng() % static_cast<std::uint64_t>(tex.width - cw + 1));
  const int y0 = static_cast<int>(rng() % static_cast<std::uint64_t>(tex.height - ch + 1));
  Image patch = resize_bilinear(crop(tex, x0, y0, cw, ch), width, height);
  return channels == 1 ? to_gray(patch) : to_rgb(patch);
}

Image blend_region(const Image& image, const Mask& mask, const Image& noise, double beta) {
  if (mask.width != image.width || mask.height != image.height) throw ValidationError("superimpose: mask dims differ");
  if (noise.width != image.width || noise.height != image.height || noise.channels != image.channels) {
    throw ValidationError("superimpose: noise dims differ");
  }
  if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("superimpose: opacity must lie in (0, 1]");
  if (mask.count() == 0) throw ValidationError("superimpose: empty mask would label an unmodified image positive");
  Image out = image;
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    if (!mask.bits[p]) continue;
    for (int c = 0; c < image.channels; ++c) {
      const std::size_t i = p * image.channels + c;
      out.pixels[i] = static_cast<float>((1.0 - beta) * image.pixels[i] + beta * noise.pixels[i]);
    }
  }
  return out;
}

Sample superimpose(const Image& image, const Mask& mask, const Image& noise, double beta, std::string id, Split split) {
  return make_sample(std::move(id), blend_region(image, mask, noise, beta), Label::positive, Source::region, split);
}

void RegionAugmentConfig::validate() const {
  mask.validate();
  transforms.validate();
  if (!(beta_min > 0 && beta_min <= beta_max && beta_max <= 1)) throw ConfigError("region: need 0 < beta_min <= beta_max <= 1");
}

RegionAugmentConfig RegionAugmentConfig::from_json(const nlohmann::json& j) {
  RegionAugmentConfig c;
  if (j.contains("mask")) c.mask = PerlinMaskSpec::from_json(j["mask"]);
  if (j.contains("transforms")) c.transforms = TransformSpec::from_json(j["transforms"]);
  if (j.contains("beta_range")) {
    c.beta_min = j["beta_range"].at(0).get<double>();
    c.beta_max = j["beta_range"].at(1).get<double>();
  }
  c.texture_dir = j.value("texture_dir", "");
  c.validate();
  return c;
}

nlohmann::json RegionAugmentConfig::to_json() const {
  return {{"mask", mask.to_json()},
          {"transforms", transforms.to_json()},
          {"transforms_applied_to", "base_image"},
          {"beta_range", {beta_min, beta_max}},
          {"texture_dir", texture_dir}};
}

RegionAugmentResult augment_region(const Image& negative, const RegionAugmentConfig& config, const NoiseSource& noise,
                                   std::uint64_t seed, std::string id) {
  const Image base = apply_standard_transforms(negative, config.transforms, derive_seed(seed, "transforms"));
  Mask mask = generate_perlin_mask(config.mask, base.width, base.height, derive_seed(seed, "mask"));
  const Image texture = noise.patch(base.width, base.height, base.channels, derive_seed(seed, "noise"));
  Rng rng(derive_seed(seed, "beta"));
  const double beta = std::uniform_real_distribution<double>(config.beta_min, config.beta_max)(rng);
  Sample sample = superimpose(base, mask, texture, beta, std::move(id));
  return {std::move(sample), std::move(mask), beta, base};
}

std::unique_ptr<NoiseSource> make_noise_source(const RegionAugmentConfig& config) {
  if (config.texture_dir.empty()) return std::make_unique<ValueNoiseSource>();
  return std::make_unique<TextureDirectorySource>(config.texture_dir);
}

}  // namespace inout
