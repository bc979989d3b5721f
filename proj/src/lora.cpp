#include "inout/lora.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "inout/digest.hpp"
#include "inout/errors.hpp"
#include "inout/rng.hpp"
#include "inout/tensor_archive.hpp"

namespace inout {

std::vector<LayerShape> layer_shapes(const WeightSet& weights, const std::vector<std::string>& names) {
  std::vector<LayerShape> shapes;
  for (const auto& name : names) {
    const auto it = weights.find(name);
    if (it == weights.end()) throw ConfigError("unknown layer: " + name);
    shapes.push_back({name, static_cast<int>(it->second.rows()), static_cast<int>(it->second.cols())});
  }
  return shapes;
}

MergeWeight::MergeWeight(double alpha) : alpha_(alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("merge weight alpha must lie in [0, 1]");
}

Eigen::MatrixXd LoraEntry::delta() const {
  return static_cast<double>(scale) * (up.cast<double>() * down.cast<double>());
}

std::string LoraAdapter::digest() const {
  Sha256 h;
  h.update("rank=" + std::to_string(rank) + "\n");
  for (const auto& [name, e] : entries) {
    h.update(name).update("\n");
    h.update(std::as_bytes(std::span(&e.scale, 1)));
    h.update(std::as_bytes(std::span(e.down.data(), static_cast<std::size_t>(e.down.size()))));
    h.update(std::as_bytes(std::span(e.up.data(), static_cast<std::size_t>(e.up.size()))));
  }
  return h.hex();
}

LoraAdapter init_adapter(const std::vector<LayerShape>& shapes, int rank, std::uint64_t seed, float lora_alpha) {
  if (rank < 1) throw ConfigError("adapter rank must be >= 1");
  LoraAdapter adapter;
  adapter.rank = rank;
  const float scale = lora_alpha > 0.0f ? lora_alpha / static_cast<float>(rank) : 1.0f;
  for (const LayerShape& s : shapes) {
    if (rank > std::min(s.rows, s.cols)) {
      throw ConfigError("adapter rank " + std::to_string(rank) + " exceeds a dimension of layer '" + s.name + "' (" +
                        std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")");
    }
    Rng rng(derive_seed(seed, s.name));
    // Kaiming-uniform-like bound on the down projection.
    const float bound = 1.0f / std::sqrt(static_cast<float>(s.cols));
    std::uniform_real_distribution<float> dist(-bound, bound);
    LoraEntry e;
    e.down = Matrix(rank, s.cols);
    for (Eigen::Index i = 0; i < e.down.size(); ++i) e.down.data()[i] = dist(rng);
    e.up = Matrix::Zero(s.rows, rank);
    e.scale = scale;
    adapter.entries.emplace(s.name, std::move(e));
  }
  return adapter;
}

WeightSet merge(const WeightSet& base, const LoraAdapter& adapter, MergeWeight alpha) {
  for (const auto& [name, e] : adapter.entries) {
    const auto it = base.find(name);
    if (it == base.end()) throw MergeError("adapter layer not in base weights: " + name);
    const Matrix& w = it->second;
    if (e.up.rows() != w.rows() || e.down.cols() != w.cols() || e.up.cols() != e.down.rows()) {
      throw MergeError("shape mismatch merging layer '" + name + "'");
    }
  }
  WeightSet out = base;
  if (alpha.value() == 0.0) return out;
  const float factor = static_cast<float>(alpha.value());
  for (const auto& [name, e] : adapter.entries) {
    out[name].noalias() += (factor * e.scale) * (e.up * e.down);
  }
  return out;
}

int numerical_rank(const Eigen::MatrixXd& m, double tolerance) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  return static_cast<int>((sv.array() > tolerance).count());
}

namespace {

NamedTensor to_tensor(const Matrix& m) {
  NamedTensor t;
  t.shape = {m.rows(), m.cols()};
  // Row-major on disk.
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  t.data.assign(rm.data(), rm.data() + rm.size());
  return t;
}

Matrix from_tensor(const NamedTensor& t, const std::string& name) {
  if (t.shape.size() != 2) throw LoadError("tensor '" + name + "' must be 2-D");
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rm(
      t.data.data(), t.shape[0], t.shape[1]);
  return rm;
}

}  // namespace

void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path) {
  TensorArchive archive;
  archive.metadata = adapter.metadata;
  archive.metadata["format"] = "inout-lora";
  archive.metadata["format_version"] = kAdapterFormatVersion;
  archive.metadata["rank"] = adapter.rank;
  nlohmann::json scales = nlohmann::json::object();
  for (const auto& [name, e] : adapter.entries) {
    archive.tensors.emplace(name + ".lora_down", to_tensor(e.down));
    archive.tensors.emplace(name + ".lora_up", to_tensor(e.up));
    // Stored as raw bits so the round trip is exact.
    std::uint32_t bits;
    std::memcpy(&bits, &e.scale, sizeof(bits));
    scales[name] = bits;
  }
  archive.metadata["scale_bits"] = scales;
  save_archive(path, archive);
}

LoraAdapter load_adapter(const std::filesystem::path& path) {
  TensorArchive archive = load_archive(path);
  auto& meta = archive.metadata;
  if (!meta.is_object() || meta.value("format", "") != "inout-lora") throw LoadError("not a LoRA archive: " + path.string());
  if (meta.value("format_version", -1) != kAdapterFormatVersion) {
    throw LoadError("unsupported adapter format version in " + path.string());
  }
  LoraAdapter adapter;
  try {
    adapter.rank = meta.at("rank").get<int>();
    for (const auto& [name, bits_json] : meta.at("scale_bits").items()) {
      const auto down = archive.tensors.find(name + ".lora_down");
      const auto up = archive.tensors.find(name + ".lora_up");
      if (down == archive.tensors.end() || up == archive.tensors.end()) {
        throw LoadError("adapter archive is missing factors for layer '" + name + "'");
      }
      LoraEntry e;
      e.down = from_tensor(down->second, down->first);
      e.up = from_tensor(up->second, up->first);
      const auto bits = bits_json.get<std::uint32_t>();
      std::memcpy(&e.scale, &bits, sizeof(bits));
      if (e.down.rows() != adapter.rank || e.up.cols() != adapter.rank) {
        throw LoadError("factor shapes disagree with rank for layer '" + name + "'");
      }
      adapter.entries.emplace(name, std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed adapter metadata: " + std::string(e.what()));
  }
  meta.erase("format");
  meta.erase("format_version");
  meta.erase("rank");
  meta.erase("scale_bits");
  adapter.metadata = std::move(meta);
  return adapter;
}

}  // namespace inout
