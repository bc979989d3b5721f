#include <doctest.h>

#include <cstring>
#include <fstream>

#include "inout/errors.hpp"
#include "inout/lora.hpp"
#include "inout/rng.hpp"
#include "inout/tensor_archive.hpp"
#include "oracles.hpp"

using namespace inout;

namespace {

WeightSet random_weights(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  WeightSet w;
  for (auto [name, rows, cols] : std::vector<std::tuple<std::string, int, int>>{{"a", 6, 10}, {"b", 12, 4}, {"c", 3, 3}}) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    w[name] = m;
  }
  return w;
}

LoraAdapter random_adapter(const WeightSet& w, int rank, std::uint64_t seed) {
  LoraAdapter a = init_adapter(layer_shapes(w, {"a", "b"}), rank, seed);
  Rng rng(seed + 1);
  std::normal_distribution<float> n(0.0f, 0.5f);
  for (auto& [name, e] : a.entries) {
    for (Eigen::Index i = 0; i < e.up.size(); ++i) e.up.data()[i] = n(rng);
  }
  return a;
}

bool bit_equal(const Matrix& x, const Matrix& y) {
  return x.rows() == y.rows() && x.cols() == y.cols() &&
         std::memcmp(x.data(), y.data(), static_cast<std::size_t>(x.size()) * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("fresh adapter has zero up factor and expected shapes") {
  const WeightSet w = random_weights(1);
  const LoraAdapter a = init_adapter(layer_shapes(w, {"a", "b"}), 3, 7);
  CHECK(a.rank == 3);
  CHECK(a.entries.at("a").down.rows() == 3);
  CHECK(a.entries.at("a").down.cols() == 10);
  CHECK(a.entries.at("a").up.rows() == 6);
  CHECK(a.entries.at("a").up.isZero(0));
  CHECK(a.entries.at("a").scale == 1.0f);
  // Same seed, same factors.
  CHECK(init_adapter(layer_shapes(w, {"a", "b"}), 3, 7) == a);
  const LoraAdapter scaled = init_adapter(layer_shapes(w, {"a"}), 4, 7, 8.0f);
  CHECK(scaled.entries.at("a").scale == 2.0f);
}

TEST_CASE("rank larger than a layer dimension is a configuration error") {
  const WeightSet w = random_weights(1);
  CHECK_THROWS_AS(init_adapter(layer_shapes(w, {"c"}), 4, 0), ConfigError);
  CHECK_THROWS_AS(init_adapter(layer_shapes(w, {"a"}), 0, 0), ConfigError);
  CHECK_THROWS_AS(layer_shapes(w, {"missing"}), ConfigError);
}

TEST_CASE("alpha zero merge is bit-exact and alpha is range checked") {
  const WeightSet w = random_weights(2);
  const WeightSet m = merge(w, random_adapter(w, 2, 3), MergeWeight(0.0));
  for (const auto& [name, mat] : w) CHECK(bit_equal(m.at(name), mat));
  CHECK_THROWS_AS(MergeWeight(-0.1), ValidationError);
  CHECK_THROWS_AS(MergeWeight(1.01), ValidationError);
}

TEST_CASE("merge equals base plus alpha times an independent product") {
  const WeightSet w = random_weights(3);
  const LoraAdapter a = random_adapter(w, 3, 4);
  for (double alpha : {0.25, 0.6, 1.0}) {
    const WeightSet m = merge(w, a, MergeWeight(alpha));
    for (const auto& [name, e] : a.entries) {
      const Eigen::MatrixXd expected =
          w.at(name).cast<double>() + alpha * e.scale * oracle::naive_product(e.up, e.down);
      CHECK((m.at(name).cast<double>() - expected).cwiseAbs().maxCoeff() < 1e-5);
    }
    CHECK(bit_equal(m.at("c"), w.at("c")));
  }
}

TEST_CASE("merge is affine in alpha") {
  const WeightSet w = random_weights(4);
  const LoraAdapter a = random_adapter(w, 2, 5);
  const WeightSet m0 = merge(w, a, MergeWeight(0.0));
  const WeightSet m1 = merge(w, a, MergeWeight(1.0));
  const WeightSet mh = merge(w, a, MergeWeight(0.3));
  for (const auto& [name, mat] : mh) {
    CHECK((mat - (0.7f * m0.at(name) + 0.3f * m1.at(name))).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("update rank never exceeds the adapter rank") {
  const WeightSet w = random_weights(5);
  for (int r : {1, 2, 3}) {
    const LoraAdapter a = random_adapter(w, r, static_cast<std::uint64_t>(r));
    for (const auto& [name, e] : a.entries) CHECK(numerical_rank(e.delta()) <= r);
  }
  Eigen::MatrixXd full = Eigen::MatrixXd::Identity(4, 4);
  CHECK(numerical_rank(full) == 4);
}

TEST_CASE("shape mismatch is a merge error") {
  const WeightSet w = random_weights(6);
  LoraAdapter a = random_adapter(w, 2, 1);
  a.entries["a"].up = Matrix::Zero(5, 2);
  CHECK_THROWS_AS(merge(w, a, MergeWeight(0.0)), MergeError);
  LoraAdapter b = random_adapter(w, 2, 1);
  b.entries["zzz"] = b.entries["a"];
  CHECK_THROWS_AS(merge(w, b, MergeWeight(0.5)), MergeError);
}

TEST_CASE("adapter file round trip is bit exact and keeps metadata") {
  const auto dir = oracle::scratch_dir("lora");
  const WeightSet w = random_weights(7);
  LoraAdapter a = random_adapter(w, 3, 8);
  a.metadata = {{"base_model_id", "toy-x"}, {"training_config_digest", "abc"}, {"custom", {1, 2}}};
  save_adapter(a, dir / "a.safetensors");
  const LoraAdapter b = load_adapter(dir / "a.safetensors");
  CHECK(b.rank == a.rank);
  for (const auto& [name, e] : a.entries) {
    CHECK(bit_equal(b.entries.at(name).up, e.up));
    CHECK(bit_equal(b.entries.at(name).down, e.down));
    CHECK(b.entries.at(name).scale == e.scale);
  }
  CHECK(b.metadata.at("custom") == nlohmann::json({1, 2}));
  CHECK(b.digest() == a.digest());
  CHECK(b == a);
}

TEST_CASE("corrupt or foreign adapter files are rejected") {
  const auto dir = oracle::scratch_dir("lora_bad");
  const WeightSet w = random_weights(8);
  save_adapter(random_adapter(w, 2, 1), dir / "a.safetensors");
  std::ifstream in(dir / "a.safetensors", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ofstream(dir / "t.safetensors", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_adapter(dir / "t.safetensors"), LoadError);

  TensorArchive foreign;
  foreign.metadata = {{"format", "something-else"}};
  save_archive(dir / "f.safetensors", foreign);
  CHECK_THROWS_AS(load_adapter(dir / "f.safetensors"), LoadError);
}
