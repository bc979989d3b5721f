#include "inout/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <numeric>
#include <sstream>

#include "inout/digest.hpp"
#include "inout/errors.hpp"
#include "inout/nn.hpp"
#include "inout/tensor_archive.hpp"

namespace inout {

ToyDenoiserConfig ToyDenoiserConfig::from_json(const nlohmann::json& j) {
  ToyDenoiserConfig c;
  c.channels = j.value("channels", c.channels);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.prompt_dim = j.value("prompt_dim", c.prompt_dim);
  c.timesteps = j.value("timesteps", c.timesteps);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  if (c.channels < 1 || c.time_dim < 2 || c.time_dim % 2 || c.prompt_dim < 1 || c.timesteps < 1) {
    throw ConfigError("toy denoiser: invalid architecture");
  }
  if (!(c.beta_start > 0 && c.beta_start <= c.beta_end && c.beta_end < 1)) throw ConfigError("toy denoiser: invalid betas");
  return c;
}

nlohmann::json ToyDenoiserConfig::to_json() const {
  return {{"channels", channels},   {"time_dim", time_dim},     {"prompt_dim", prompt_dim},
          {"timesteps", timesteps}, {"beta_start", beta_start}, {"beta_end", beta_end}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.prompt = j.value("prompt", c.prompt);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 0 || c.batch_size < 1 || !(c.learning_rate > 0)) throw ConfigError("pretrain: invalid config");
  return c;
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"prompt", prompt}, {"epochs", epochs}, {"learning_rate", learning_rate}, {"batch_size", batch_size}, {"seed", seed}};
}

namespace {

Matrix zero_bias(int n) { return Matrix::Zero(n, 1); }

WeightSet init_toy_weights(const ToyDenoiserConfig& c, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "toy-denoiser-init"));
  const int ch = c.channels, d = c.time_dim + c.prompt_dim;
  WeightSet w;
  w["cond_proj.weight"] = nn::he_uniform(2 * ch, d, d, rng) * 0.5f;
  w["cond_proj.bias"] = zero_bias(2 * ch);
  w["conv_in.weight"] = nn::he_uniform(ch, 9, 9, rng);
  w["conv_in.bias"] = zero_bias(ch);
  w["conv_mid1.weight"] = nn::he_uniform(ch, 9 * ch, 9 * ch, rng);
  w["conv_mid1.bias"] = zero_bias(ch);
  w["conv_mid2.weight"] = nn::he_uniform(ch, 9 * ch, 9 * ch, rng);
  w["conv_mid2.bias"] = zero_bias(ch);
  w["conv_out.weight"] = nn::he_uniform(1, 9 * ch, 9 * ch, rng) * 0.1f;
  w["conv_out.bias"] = zero_bias(1);
  return w;
}

void check_toy_weights(const ToyDenoiserConfig& c, const WeightSet& w) {
  const auto reference = init_toy_weights(c, 0);
  for (const auto& [name, m] : reference) {
    const auto it = w.find(name);
    if (it == w.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw ConfigError("toy denoiser weights missing or misshapen: " + name);
    }
  }
}

// Grayscale in [-1, 1], 1 x (h*w).
Matrix to_signal(const Image& image) {
  const Image gray = to_gray(image);
  Matrix m(1, static_cast<Eigen::Index>(gray.pixel_count()));
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = 2.0f * gray.pixels[i] - 1.0f;
  return m;
}

Image from_signal(const Matrix& m, int width, int height) {
  Image out(width, height, 3);
  for (int i = 0; i < width * height; ++i) {
    const float v = std::clamp((m(0, i) + 1.0f) * 0.5f, 0.0f, 1.0f);
    out.pixels[3 * static_cast<std::size_t>(i)] = v;
    out.pixels[3 * static_cast<std::size_t>(i) + 1] = v;
    out.pixels[3 * static_cast<std::size_t>(i) + 2] = v;
  }
  return out;
}

struct ForwardCache {
  nn::FeatureMap input, a1, a2, a3;
  Matrix h1, h2, h3;
  nn::ConvCache c_in, c_mid1, c_mid2, c_out;
  Embedding cond;
  Matrix out;
};

void toy_forward(const WeightSet& w, int channels, const Matrix& noisy, int height, int width, const Embedding& cond,
                 ForwardCache& f) {
  const int ch = channels;
  f.cond = cond;
  const Matrix film = w.at("cond_proj.weight") * cond + w.at("cond_proj.bias");
  f.input = nn::FeatureMap(1, height, width);
  f.input.data = noisy;

  nn::FeatureMap h = nn::conv_forward(f.input, w.at("conv_in.weight"), w.at("conv_in.bias"), 1, f.c_in);
  h.data.colwise() += film.col(0).head(ch);
  f.h1 = h.data;
  f.a1 = h;
  nn::relu_inplace(f.a1.data);

  h = nn::conv_forward(f.a1, w.at("conv_mid1.weight"), w.at("conv_mid1.bias"), 1, f.c_mid1);
  h.data.colwise() += film.col(0).tail(ch);
  f.h2 = h.data;
  f.a2 = h;
  nn::relu_inplace(f.a2.data);

  h = nn::conv_forward(f.a2, w.at("conv_mid2.weight"), w.at("conv_mid2.bias"), 2, f.c_mid2);
  f.h3 = h.data;
  f.a3 = h;
  nn::relu_inplace(f.a3.data);
  f.a3.data += f.a2.data;

  f.out = nn::conv_forward(f.a3, w.at("conv_out.weight"), w.at("conv_out.bias"), 1, f.c_out).data;
}

void toy_backward(const WeightSet& w, const ForwardCache& f, const Matrix& grad_out, WeightSet& g, float scale) {
  const int ch = static_cast<int>(f.a1.channels);
  const Matrix dout = scale * grad_out;
  nn::FeatureMap da3;
  nn::conv_backward(dout, f.c_out, w.at("conv_out.weight"), 1, f.a3, &g.at("conv_out.weight"), &g.at("conv_out.bias"), &da3);

  Matrix dh3 = da3.data;
  nn::relu_backward(dh3, f.h3);
  nn::FeatureMap da2;
  nn::conv_backward(dh3, f.c_mid2, w.at("conv_mid2.weight"), 2, f.a2, &g.at("conv_mid2.weight"), &g.at("conv_mid2.bias"), &da2);
  Matrix dh2 = da2.data + da3.data;
  nn::relu_backward(dh2, f.h2);

  nn::FeatureMap da1;
  nn::conv_backward(dh2, f.c_mid1, w.at("conv_mid1.weight"), 1, f.a1, &g.at("conv_mid1.weight"), &g.at("conv_mid1.bias"), &da1);
  Matrix dh1 = da1.data;
  nn::relu_backward(dh1, f.h1);
  nn::conv_backward(dh1, f.c_in, w.at("conv_in.weight"), 1, f.input, &g.at("conv_in.weight"), &g.at("conv_in.bias"), nullptr);

  Matrix dfilm(2 * ch, 1);
  dfilm.col(0).head(ch) = dh1.rowwise().sum();
  dfilm.col(0).tail(ch) = dh2.rowwise().sum();
  g.at("cond_proj.weight").noalias() += dfilm * f.cond.transpose();
  g.at("cond_proj.bias") += dfilm;
}

}  // namespace

ToyDiffusionBackend::ToyDiffusionBackend(ToyDenoiserConfig config, std::uint64_t init_seed)
    : ToyDiffusionBackend(config, init_toy_weights(config, init_seed)) {}

ToyDiffusionBackend::ToyDiffusionBackend(ToyDenoiserConfig config, WeightSet weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  check_toy_weights(config_, weights_);
  const int T = config_.timesteps;
  betas_.resize(static_cast<std::size_t>(T));
  alpha_bar_.resize(static_cast<std::size_t>(T));
  double running = 1.0;
  for (int t = 0; t < T; ++t) {
    betas_[t] = T == 1 ? config_.beta_start
                       : config_.beta_start + (config_.beta_end - config_.beta_start) * t / static_cast<double>(T - 1);
    running *= 1.0 - betas_[t];
    alpha_bar_[t] = running;
  }
}

ToyDiffusionBackend ToyDiffusionBackend::load(const std::filesystem::path& path) {
  TensorArchive archive = load_archive(path);
  if (archive.metadata.value("format", "") != "inout-toy-denoiser") throw LoadError("not a toy denoiser archive: " + path.string());
  WeightSet w;
  for (const auto& [name, t] : archive.tensors) {
    if (t.shape.size() != 2) throw LoadError("tensor '" + name + "' must be 2-D");
    w[name] = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data(), t.shape[0], t.shape[1]);
  }
  return ToyDiffusionBackend(ToyDenoiserConfig::from_json(archive.metadata.at("config")), std::move(w));
}

void ToyDiffusionBackend::save(const std::filesystem::path& path) const {
  TensorArchive archive;
  archive.metadata = {{"format", "inout-toy-denoiser"}, {"config", config_.to_json()}, {"model_id", model_id()}};
  for (const auto& [name, m] : weights_) {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    archive.tensors[name] = {{m.rows(), m.cols()}, std::vector<float>(rm.data(), rm.data() + rm.size())};
  }
  save_archive(path, archive);
}

std::string ToyDiffusionBackend::model_id() const {
  Sha256 h;
  h.update("toy-denoiser\n").update(config_.to_json().dump());
  for (const auto& [name, m] : weights_) {
    h.update(name);
    h.update(std::as_bytes(std::span(m.data(), static_cast<std::size_t>(m.size()))));
  }
  return "toy-" + h.hex().substr(0, 16);
}

std::vector<std::string> ToyDiffusionBackend::adaptable_layers() const {
  // conv_out has a single output row, below any useful rank.
  return {"cond_proj.weight", "conv_in.weight", "conv_mid1.weight", "conv_mid2.weight"};
}

Embedding ToyDiffusionBackend::encode_prompt(std::string_view prompt) const {
  Embedding e = Embedding::Zero(config_.prompt_dim);
  std::istringstream words{std::string(prompt)};
  std::string token;
  int n = 0;
  while (words >> token) {
    Rng rng(derive_seed(fnv1a(token), "token-embedding"));
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (int i = 0; i < config_.prompt_dim; ++i) e[i] += normal(rng);
    ++n;
  }
  if (n > 0) e /= std::sqrt(static_cast<float>(n));
  return e;
}

Embedding ToyDiffusionBackend::condition(int t, const Embedding& prompt) const {
  Embedding c(config_.time_dim + config_.prompt_dim);
  const int half = config_.time_dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1000.0) * i / half);
    c[2 * i] = static_cast<float>(std::sin(t * freq));
    c[2 * i + 1] = static_cast<float>(std::cos(t * freq));
  }
  c.tail(config_.prompt_dim) = prompt;
  return c;
}

Matrix ToyDiffusionBackend::predict_noise(const WeightSet& weights, const Matrix& noisy, int height, int width, int t,
                                          const Embedding& cond) const {
  ForwardCache f;
  toy_forward(weights, config_.channels, noisy, height, width, condition(t, cond), f);
  return f.out;
}

double ToyDiffusionBackend::denoise_loss(const WeightSet& weights, const Image& image, const Embedding& cond, Rng& rng,
                                         WeightSet* grads, float grad_scale) const {
  const Matrix x0 = to_signal(image);
  const int t = std::uniform_int_distribution<int>(0, config_.timesteps - 1)(rng);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Matrix noise(1, x0.cols());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
  const auto ab = static_cast<float>(alpha_bar_[t]);
  const Matrix noisy = std::sqrt(ab) * x0 + std::sqrt(1.0f - ab) * noise;

  ForwardCache f;
  toy_forward(weights, config_.channels, noisy, image.height, image.width, condition(t, cond), f);
  const Matrix diff = f.out - noise;
  const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
  if (grads) {
    if (grads->empty()) nn::zero_like(*grads, weights);
    toy_backward(weights, f, (2.0f / static_cast<float>(diff.size())) * diff, *grads, grad_scale);
  }
  return loss;
}

Image ToyDiffusionBackend::sample(const WeightSet& weights, const Embedding& cond, Resolution resolution,
                                  std::uint64_t seed) const {
  if (resolution.width < 1 || resolution.height < 1) throw ValidationError("sample: resolution must be positive");
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const Eigen::Index n = static_cast<Eigen::Index>(resolution.width) * resolution.height;
  Matrix x(1, n);
  for (Eigen::Index i = 0; i < n; ++i) x.data()[i] = normal(rng);
  for (int t = config_.timesteps - 1; t >= 0; --t) {
    const Matrix eps = predict_noise(weights, x, resolution.height, resolution.width, t, cond);
    const double ab = alpha_bar_[t];
    const double ab_prev = t > 0 ? alpha_bar_[t - 1] : 1.0;
    const double beta = betas_[t];
    // Posterior q(x_{t-1} | x_t, x0_hat) with the clipped x0 estimate.
    const Matrix x0 = ((x - static_cast<float>(std::sqrt(1 - ab)) * eps) / static_cast<float>(std::sqrt(ab)))
                          .cwiseMax(-1.0f)
                          .cwiseMin(1.0f);
    const double c0 = std::sqrt(ab_prev) * beta / (1 - ab);
    const double ct = std::sqrt(1 - beta) * (1 - ab_prev) / (1 - ab);
    x = static_cast<float>(c0) * x0 + static_cast<float>(ct) * x;
    if (t > 0) {
      const auto sigma = static_cast<float>(std::sqrt(beta * (1 - ab_prev) / (1 - ab)));
      for (Eigen::Index i = 0; i < n; ++i) x.data()[i] += sigma * normal(rng);
    }
  }
  return from_signal(x, resolution.width, resolution.height);
}

std::vector<double> ToyDiffusionBackend::pretrain(std::span<const Image> images, const PretrainConfig& config) {
  if (images.empty()) throw ConfigError("pretrain: no images");
  const Embedding cond = encode_prompt(config.prompt);
  Rng rng(derive_seed(config.seed, "toy-pretrain"));
  nn::Adam adam(config.learning_rate);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      WeightSet grads;
      nn::zero_like(grads, weights_);
      const float scale = 1.0f / static_cast<float>(end - start);
      for (std::size_t i = start; i < end; ++i) total += denoise_loss(weights_, images[order[i]], cond, rng, &grads, scale);
      adam.step(weights_, grads);
    }
    const double mean = total / static_cast<double>(images.size());
    if (!std::isfinite(mean)) throw TrainingError("pretrain: non-finite loss at epoch " + std::to_string(epoch));
    losses.push_back(mean);
  }
  return losses;
}

void FinetuneConfig::validate() const {
  if (!(prior_weight >= 0)) throw ConfigError("finetune: prior_weight must be >= 0");
  if (epochs < 0) throw ConfigError("finetune: epochs must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("finetune: learning_rate must be > 0");
  if (!(alpha_default >= 0 && alpha_default <= 1)) throw ConfigError("finetune: alpha_default must lie in [0,1]");
  if (num_regularization_images < 0) throw ConfigError("finetune: num_regularization_images must be >= 0");
  if (rank < 1) throw ConfigError("finetune: rank must be >= 1");
  if (instance_prompt.empty()) throw ConfigError("finetune: instance_prompt is empty");
  // The class prompt must not carry the identifier: every instance token absent from it.
  std::istringstream inst(instance_prompt), cls(class_prompt);
  std::vector<std::string> class_tokens{std::istream_iterator<std::string>(cls), {}};
  for (std::string tok; inst >> tok;) {
    if (std::find(class_tokens.begin(), class_tokens.end(), tok) == class_tokens.end()) return;
  }
  throw ConfigError("finetune: instance_prompt has no identification token beyond the class prompt");
}

std::string FinetuneConfig::digest() const { return sha256_hex(to_json().dump()); }

FinetuneConfig FinetuneConfig::from_json(const nlohmann::json& j) {
  FinetuneConfig c;
  c.instance_prompt = j.value("instance_prompt", c.instance_prompt);
  c.class_prompt = j.value("class_prompt", c.class_prompt);
  c.prior_weight = j.value("prior_weight", c.prior_weight);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.alpha_default = j.value("alpha", c.alpha_default);
  c.num_regularization_images = j.value("num_regularization_images", c.num_regularization_images);
  c.rank = j.value("rank", c.rank);
  c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json FinetuneConfig::to_json() const {
  return {{"instance_prompt", instance_prompt},
          {"class_prompt", class_prompt},
          {"prior_weight", prior_weight},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"alpha", alpha_default},
          {"num_regularization_images", num_regularization_images},
          {"rank", rank},
          {"lora_alpha", lora_alpha},
          {"optimizer", optimizer},
          {"seed", seed}};
}

ScenarioPreset scenario_preset(std::string_view name) {
  if (name == "zero_shot") return {"zero_shot", 50, false, 5, 0.60};
  if (name == "few_shot") return {"few_shot", 5, true, 49, 0.95};
  if (name == "full_shot") return {"full_shot", 246, true, 25, 0.80};
  throw ConfigError("unknown scenario preset: " + std::string(name));
}

namespace {

std::vector<Image> generate_images(const DiffusionBackend& backend, const WeightSet& weights, std::string_view prompt,
                                   int count, std::uint64_t seed, Resolution resolution) {
  const Embedding cond = backend.encode_prompt(prompt);
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(backend.sample(weights, cond, resolution, derive_seed(seed, "sample", static_cast<std::uint64_t>(i))));
  }
  return out;
}

}  // namespace

std::vector<Image> prepare_regularization_set(const DiffusionBackend& backend, std::string_view class_prompt, int count,
                                              std::uint64_t seed, Resolution resolution,
                                              const std::optional<std::filesystem::path>& cache_dir) {
  if (count < 0) throw ValidationError("regularization count must be >= 0");
  std::filesystem::path cache_file;
  if (cache_dir) {
    std::ostringstream key;
    key << backend.model_id() << '\n' << class_prompt << '\n' << count << '\n' << seed << '\n'
        << resolution.width << 'x' << resolution.height;
    cache_file = *cache_dir / ("reg-" + sha256_hex(key.str()).substr(0, 24) + ".safetensors");
    if (std::filesystem::exists(cache_file)) {
      const TensorArchive archive = load_archive(cache_file);
      std::vector<Image> images;
      for (const auto& [name, t] : archive.tensors) {
        Image img(static_cast<int>(t.shape.at(1)), static_cast<int>(t.shape.at(0)), static_cast<int>(t.shape.at(2)));
        img.pixels = t.data;
        images.push_back(std::move(img));
      }
      if (static_cast<int>(images.size()) == count) return images;
    }
  }
  auto images = generate_images(backend, backend.base_weights(), class_prompt, count, derive_seed(seed, "regularization"),
                                resolution);
  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    TensorArchive archive;
    archive.metadata = {{"class_prompt", std::string(class_prompt)}, {"model_id", backend.model_id()}, {"seed", seed}};
    for (std::size_t i = 0; i < images.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "reg_%05zu", i);
      archive.tensors[name] = {{images[i].height, images[i].width, images[i].channels}, images[i].pixels};
    }
    save_archive(cache_file, archive);
  }
  return images;
}

FinetuneResult finetune(const DiffusionBackend& backend, std::span<const Image> instance_images,
                        std::span<const Image> regularization_images, const FinetuneConfig& config) {
  config.validate();
  if (instance_images.empty()) throw ConfigError("finetune: instance image set is empty");
  const WeightSet& base = backend.base_weights();
  FinetuneResult result;
  result.adapter = init_adapter(layer_shapes(base, backend.adaptable_layers()), config.rank, config.seed, config.lora_alpha);
  result.adapter.metadata = {{"base_model_id", backend.model_id()},
                             {"training_config_digest", config.digest()},
                             {"instance_prompt", config.instance_prompt}};

  const Embedding inst_cond = backend.encode_prompt(config.instance_prompt);
  const Embedding class_cond = backend.encode_prompt(config.class_prompt);
  Rng rng(derive_seed(config.seed, "finetune"));
  std::vector<std::size_t> order(instance_images.size());
  std::iota(order.begin(), order.end(), 0);
  const auto lr = static_cast<float>(config.learning_rate);
  const bool use_prior = !regularization_images.empty() && config.prior_weight > 0;
  std::size_t reg_cursor = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t idx : order) {
      const WeightSet effective = merge(base, result.adapter, MergeWeight(1.0));
      WeightSet grads;
      double loss = backend.denoise_loss(effective, instance_images[idx], inst_cond, rng, &grads);
      if (use_prior) {
        const Image& reg = regularization_images[reg_cursor++ % regularization_images.size()];
        loss += config.prior_weight *
                backend.denoise_loss(effective, reg, class_cond, rng, &grads, static_cast<float>(config.prior_weight));
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("finetune: non-finite loss at epoch " + std::to_string(epoch) + " (learning rate " +
                            std::to_string(config.learning_rate) + " may be too high)");
      }
      total += loss;
      for (auto& [name, entry] : result.adapter.entries) {
        const Matrix& g = grads.at(name);
        const Matrix grad_up = entry.scale * (g * entry.down.transpose());
        const Matrix grad_down = entry.scale * (entry.up.transpose() * g);
        entry.up -= lr * grad_up;
        entry.down -= lr * grad_down;
      }
    }
    result.train_losses.push_back(total / static_cast<double>(instance_images.size()));
    const WeightSet trained = merge(base, result.adapter, MergeWeight(1.0));
    double probe = 0;
    for (std::size_t i = 0; i < instance_images.size(); ++i) {
      for (int k = 0; k < kProbeDrawsPerImage; ++k) {
        Rng draw(derive_seed(config.seed, "probe", i * kProbeDrawsPerImage + static_cast<std::size_t>(k)));
        probe += backend.denoise_loss(trained, instance_images[i], inst_cond, draw, nullptr);
      }
    }
    result.epoch_losses.push_back(probe / static_cast<double>(instance_images.size() * kProbeDrawsPerImage));
  }
  return result;
}

std::vector<Sample> generate(const DiffusionBackend& backend, const LoraAdapter* adapter, MergeWeight alpha,
                             const GenerationRequest& request) {
  if (request.count < 0) throw ValidationError("generate: count must be >= 0");
  if (request.resolution.width < 1 || request.resolution.height < 1) {
    throw ValidationError("generate: resolution must be positive");
  }
  const WeightSet weights = adapter ? merge(backend.base_weights(), *adapter, alpha) : backend.base_weights();
  auto images = generate_images(backend, weights, request.prompt, request.count, request.seed, request.resolution);
  const std::string tag = sha256_hex(request.prompt).substr(0, 8);
  std::vector<Sample> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(make_sample("diff_" + tag + "_" + std::to_string(request.seed) + "_" + std::to_string(i),
                              std::move(images[i]), request.label, Source::diffusion, Split::train));
  }
  return out;
}

}  // namespace inout
