#include "inout/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "inout/errors.hpp"
#include "inout/nn.hpp"
#include "inout/rng.hpp"
#include "inout/tensor_archive.hpp"

namespace inout {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train: momentum must lie in [0, 1)");
  const auto known = available_backbones();
  if (std::find(known.begin(), known.end(), backbone) == known.end()) {
    throw ConfigError("train: backbone '" + backbone + "' is not available in this build");
  }
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.momentum = j.value("momentum", c.momentum);
  c.backbone = j.value("backbone", c.backbone);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},     {"learning_rate", learning_rate}, {"batch_size", batch_size},
          {"momentum", momentum}, {"backbone", backbone},           {"seed", seed}};
}

std::vector<std::string> available_backbones() { return {"small_cnn"}; }

namespace {

constexpr int kC1 = 8, kC2 = 16, kC3 = 16;

WeightSet init_small_cnn(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "small-cnn-init"));
  WeightSet w;
  w["conv1.weight"] = nn::he_uniform(kC1, 9 * 3, 9 * 3, rng);
  w["conv1.bias"] = Matrix::Zero(kC1, 1);
  w["conv2.weight"] = nn::he_uniform(kC2, 9 * kC1, 9 * kC1, rng);
  w["conv2.bias"] = Matrix::Zero(kC2, 1);
  w["conv3.weight"] = nn::he_uniform(kC3, 9 * kC2, 9 * kC2, rng);
  w["conv3.bias"] = Matrix::Zero(kC3, 1);
  w["head.weight"] = nn::he_uniform(1, 2 * kC3, 2 * kC3, rng) * 0.5f;
  w["head.bias"] = Matrix::Zero(1, 1);
  return w;
}

nn::FeatureMap to_input(const Image& image) {
  const Image rgb = to_rgb(image);
  nn::FeatureMap in(3, rgb.height, rgb.width);
  for (std::size_t i = 0; i < rgb.pixels.size(); ++i) in.data.data()[i] = rgb.pixels[i] - 0.5f;
  return in;
}

struct CnnCache {
  nn::FeatureMap input, a1, p1, a2, p2, a3;
  Matrix h1, h2, h3;
  nn::ConvCache c1, c2, c3;
  nn::PoolCache pool1, pool2;
  std::vector<int> argmax;
  Eigen::VectorXf features;
  double logit = 0;
};

void cnn_forward(const WeightSet& w, const Image& image, CnnCache& f) {
  f.input = to_input(image);
  auto h = nn::conv_forward(f.input, w.at("conv1.weight"), w.at("conv1.bias"), 1, f.c1);
  f.h1 = h.data;
  nn::relu_inplace(h.data);
  f.a1 = h;
  f.p1 = nn::maxpool2_forward(f.a1, f.pool1);
  h = nn::conv_forward(f.p1, w.at("conv2.weight"), w.at("conv2.bias"), 1, f.c2);
  f.h2 = h.data;
  nn::relu_inplace(h.data);
  f.a2 = h;
  f.p2 = nn::maxpool2_forward(f.a2, f.pool2);
  h = nn::conv_forward(f.p2, w.at("conv3.weight"), w.at("conv3.bias"), 1, f.c3);
  f.h3 = h.data;
  nn::relu_inplace(h.data);
  f.a3 = h;

  const Eigen::Index n = f.a3.data.cols();
  f.features.resize(2 * kC3);
  f.argmax.assign(kC3, 0);
  for (int c = 0; c < kC3; ++c) {
    Eigen::Index arg = 0;
    f.features[c] = f.a3.data.row(c).maxCoeff(&arg);
    f.argmax[c] = static_cast<int>(arg);
    f.features[kC3 + c] = f.a3.data.row(c).sum() / static_cast<float>(n);
  }
  f.logit = (w.at("head.weight") * f.features)(0) + w.at("head.bias")(0, 0);
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

void check_weights(const WeightSet& w) {
  for (const auto& [name, m] : init_small_cnn(0)) {
    const auto it = w.find(name);
    if (it == w.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw LoadError("classifier weights missing or misshapen: " + name);
    }
  }
}

}  // namespace

DefectClassifier::DefectClassifier(std::string backbone, Resolution resolution, std::uint64_t seed)
    : DefectClassifier(std::move(backbone), resolution, init_small_cnn(seed)) {}

DefectClassifier::DefectClassifier(std::string backbone, Resolution resolution, WeightSet weights)
    : backbone_(std::move(backbone)), resolution_(resolution), weights_(std::move(weights)) {
  if (backbone_ != "small_cnn") throw ConfigError("backbone '" + backbone_ + "' is not available in this build");
  if (resolution_.width < 4 || resolution_.height < 4) throw ConfigError("classifier input must be at least 4x4");
  check_weights(weights_);
}

double DefectClassifier::score(const Image& image) const {
  if (image.resolution() != resolution_) {
    throw ValidationError("image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                          " but the classifier was trained at " + std::to_string(resolution_.width) + "x" +
                          std::to_string(resolution_.height));
  }
  CnnCache f;
  cnn_forward(weights_, image, f);
  return sigmoid(f.logit);
}

double DefectClassifier::loss_and_grad(const Image& image, float target, WeightSet& grads, float scale) const {
  CnnCache f;
  cnn_forward(weights_, image, f);
  const double p = sigmoid(f.logit);
  // Stable BCE from the logit.
  const double loss = std::max(f.logit, 0.0) - f.logit * target + std::log1p(std::exp(-std::abs(f.logit)));
  const auto dlogit = static_cast<float>((p - target) * scale);

  grads.at("head.weight").noalias() += dlogit * f.features.transpose();
  grads.at("head.bias")(0, 0) += dlogit;
  const Eigen::VectorXf dfeat = dlogit * weights_.at("head.weight").row(0).transpose();

  const Eigen::Index n = f.a3.data.cols();
  Matrix da3 = Matrix::Zero(kC3, n);
  for (int c = 0; c < kC3; ++c) {
    da3.row(c).array() += dfeat[kC3 + c] / static_cast<float>(n);
    da3(c, f.argmax[c]) += dfeat[c];
  }
  nn::relu_backward(da3, f.h3);
  nn::FeatureMap dp2;
  nn::conv_backward(da3, f.c3, weights_.at("conv3.weight"), 1, f.p2, &grads.at("conv3.weight"), &grads.at("conv3.bias"), &dp2);
  nn::FeatureMap da2 = nn::maxpool2_backward(dp2, f.pool2, kC2);
  nn::relu_backward(da2.data, f.h2);
  nn::FeatureMap dp1;
  nn::conv_backward(da2.data, f.c2, weights_.at("conv2.weight"), 1, f.p1, &grads.at("conv2.weight"), &grads.at("conv2.bias"), &dp1);
  nn::FeatureMap da1 = nn::maxpool2_backward(dp1, f.pool1, kC1);
  nn::relu_backward(da1.data, f.h1);
  nn::conv_backward(da1.data, f.c1, weights_.at("conv1.weight"), 1, f.input, &grads.at("conv1.weight"), &grads.at("conv1.bias"), nullptr);
  return loss;
}

void DefectClassifier::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  TensorArchive archive;
  archive.metadata = extra;
  archive.metadata["format"] = "inout-classifier";
  archive.metadata["backbone"] = backbone_;
  archive.metadata["resolution"] = {resolution_.width, resolution_.height};
  for (const auto& [name, m] : weights_) {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    archive.tensors[name] = {{m.rows(), m.cols()}, std::vector<float>(rm.data(), rm.data() + rm.size())};
  }
  save_archive(path, archive);
}

DefectClassifier DefectClassifier::load(const std::filesystem::path& path) {
  TensorArchive archive = load_archive(path);
  if (archive.metadata.value("format", "") != "inout-classifier") throw LoadError("not a classifier checkpoint: " + path.string());
  WeightSet w;
  for (const auto& [name, t] : archive.tensors) {
    if (t.shape.size() != 2) throw LoadError("tensor '" + name + "' must be 2-D");
    w[name] = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data(),
                                                                                                    t.shape[0], t.shape[1]);
  }
  const auto& res = archive.metadata.at("resolution");
  return DefectClassifier(archive.metadata.at("backbone").get<std::string>(), {res.at(0).get<int>(), res.at(1).get<int>()},
                          std::move(w));
}

DefectClassifier train_classifier(const DatasetManifest& dataset, const TrainConfig& config) {
  config.validate();
  const auto train = dataset.select(Split::train);
  const SplitCounts& counts = dataset.counts(Split::train);
  if (config.epochs > 0 && (counts.positive == 0 || counts.negative == 0)) {
    throw ConfigError("train: the train split must contain both classes (negatives " + std::to_string(counts.negative) +
                      ", positives " + std::to_string(counts.positive) + ")");
  }
  Resolution res = dataset.target_resolution();
  if (!train.empty()) res = train.front().image().resolution();
  DefectClassifier model(config.backbone, res, config.seed);
  for (const Sample& s : train) {
    if (s.image().resolution() != res) throw ValidationError("train: sample '" + s.id + "' has a different resolution");
  }

  Rng rng(derive_seed(config.seed, "classifier-batches"));
  nn::Sgd sgd(config.learning_rate, config.momentum);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      WeightSet grads;
      nn::zero_like(grads, model.weights());
      const float scale = 1.0f / static_cast<float>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train[order[i]];
        total += model.loss_and_grad(s.image(), s.label == Label::positive ? 1.0f : 0.0f, grads, scale);
      }
      sgd.step(model.mutable_weights(), grads);
    }
    if (!std::isfinite(total)) throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch));
  }
  return model;
}

ClassifierRunResult predict_scores(const DefectClassifier& model, const DatasetManifest& manifest) {
  const auto test = manifest.select(Split::test);
  if (test.empty()) throw ValidationError("predict: the test split is empty");
  ClassifierRunResult result;
  result.train_manifest_hash = manifest.content_hash();
  for (const Sample& s : test) {
    const double p = model.score(s.image());
    if (!std::isfinite(p)) throw TrainingError("predict: non-finite score for " + s.id);
    result.ids.push_back(s.id);
    result.scores.push_back(p);
    result.labels.push_back(s.label == Label::positive ? 1 : 0);
  }
  return result;
}

void write_scores(const std::filesystem::path& path, const ClassifierRunResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write scores: " + path.string());
  out << "# seed=" << result.seed << " train_manifest=" << result.train_manifest_hash << '\n';
  out << "id,score,label\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    out << result.ids[i] << ',' << result.scores[i] << ',' << result.labels[i] << '\n';
  }
}

ClassifierRunResult read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read scores: " + path.string());
  ClassifierRunResult r;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream meta(line.substr(1));
      for (std::string kv; meta >> kv;) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        if (kv.substr(0, eq) == "seed") r.seed = std::stoull(kv.substr(eq + 1));
        if (kv.substr(0, eq) == "train_manifest") r.train_manifest_hash = kv.substr(eq + 1);
      }
      continue;
    }
    if (line == "id,score,label") continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw ValidationError("malformed score row: " + line);
    r.ids.push_back(line.substr(0, a));
    r.scores.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    r.labels.push_back(std::stoi(line.substr(b + 1)));
  }
  return r;
}

}  // namespace inout
