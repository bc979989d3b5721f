#include <doctest.h>

#include <cstring>

#include "inout/diffusion.hpp"
#include "inout/errors.hpp"
#include "inout/synthetic.hpp"
#include "oracles.hpp"

using namespace inout;

namespace {

ToyDenoiserConfig small_config() {
  ToyDenoiserConfig c;
  c.channels = 6;
  c.timesteps = 20;
  return c;
}

std::vector<Image> stripes(int n, std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(striped_texture({16, 32}, seed + static_cast<std::uint64_t>(i)));
  return out;
}

bool same_weights(const WeightSet& a, const WeightSet& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, m] : a) {
    const Matrix& n = b.at(name);
    if (m.rows() != n.rows() || m.cols() != n.cols()) return false;
    if (std::memcmp(m.data(), n.data(), static_cast<std::size_t>(m.size()) * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("noise schedule is monotone") {
  const ToyDiffusionBackend b(small_config(), 0);
  for (int t = 1; t < 20; ++t) CHECK(b.alpha_bar(t) < b.alpha_bar(t - 1));
  CHECK(b.alpha_bar(0) < 1.0);
  CHECK(b.alpha_bar(19) > 0.0);
}

TEST_CASE("prompt codes are deterministic and token-keyed") {
  const ToyDiffusionBackend b(small_config(), 0);
  CHECK(b.encode_prompt("skt background") == b.encode_prompt("skt  background"));
  CHECK(b.encode_prompt("skt background") != b.encode_prompt("background"));
  CHECK(b.encode_prompt("skt background") != b.encode_prompt("xyz background"));
  CHECK(b.encode_prompt("").isZero(0));
}

TEST_CASE("finetune config requires an identification token") {
  FinetuneConfig c;
  CHECK_NOTHROW(c.validate());
  c.instance_prompt = "background";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.instance_prompt = "background cracked";
  c.class_prompt = "cracked background";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  FinetuneConfig d;
  d.epochs = -1;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  CHECK(FinetuneConfig::from_json(FinetuneConfig{}.to_json()).digest() == FinetuneConfig{}.digest());
}

TEST_CASE("scenario presets") {
  CHECK(scenario_preset("zero_shot").instance_count == 50);
  CHECK(scenario_preset("zero_shot").alpha == 0.60);
  CHECK(scenario_preset("few_shot").epochs == 49);
  CHECK(scenario_preset("few_shot").alpha == 0.95);
  CHECK(scenario_preset("full_shot").instance_count == 246);
  CHECK(scenario_preset("full_shot").alpha == 0.80);
  CHECK_THROWS_AS(scenario_preset("two_shot"), ConfigError);
}

TEST_CASE("zero epochs returns the zero-update adapter and leaves base weights alone") {
  const ToyDiffusionBackend b(small_config(), 1);
  const WeightSet before = b.base_weights();
  FinetuneConfig c;
  c.epochs = 0;
  c.rank = 2;
  const auto inst = stripes(2, 1);
  const FinetuneResult r = finetune(b, inst, {}, c);
  CHECK(r.epoch_losses.empty());
  for (const auto& [name, e] : r.adapter.entries) CHECK(e.up.isZero(0));
  CHECK(same_weights(merge(b.base_weights(), r.adapter, MergeWeight(1.0)), before));
  CHECK(r.adapter.metadata.at("base_model_id") == b.model_id());
  CHECK(r.adapter.metadata.at("training_config_digest") == c.digest());
}

TEST_CASE("training reduces the probe loss without touching base weights") {
  ToyDiffusionBackend b(small_config(), 2);
  const auto data = stripes(12, 100);
  b.pretrain(data, PretrainConfig{"background", 2, 2e-3, 4, 0});
  const WeightSet before = b.base_weights();
  FinetuneConfig c;
  c.epochs = 15;
  c.learning_rate = 0.1;
  c.rank = 2;
  c.num_regularization_images = 4;
  const auto reg = prepare_regularization_set(b, c.class_prompt, 4, 0, {16, 32});
  const auto inst = stripes(3, 500);
  const FinetuneResult r = finetune(b, inst, reg, c);
  REQUIRE(r.epoch_losses.size() == 15);
  REQUIRE(r.train_losses.size() == 15);
  CHECK(r.epoch_losses.back() < r.epoch_losses.front());
  CHECK(same_weights(b.base_weights(), before));
  // Deterministic given the seed.
  CHECK(finetune(b, inst, reg, c).adapter == r.adapter);
}

TEST_CASE("exploding learning rate is reported as a training error") {
  const ToyDiffusionBackend b(small_config(), 3);
  FinetuneConfig c;
  c.epochs = 20;
  c.learning_rate = 1e12;
  c.rank = 2;
  CHECK_THROWS_AS(finetune(b, stripes(2, 1), {}, c), TrainingError);
  FinetuneConfig ok;
  CHECK_THROWS_AS(finetune(b, {}, {}, ok), ConfigError);
}

TEST_CASE("generation: count, ids, labels, determinism, alpha zero equals base") {
  const ToyDiffusionBackend b(small_config(), 4);
  LoraAdapter a = init_adapter(layer_shapes(b.base_weights(), b.adaptable_layers()), 2, 1);
  for (auto& [name, e] : a.entries) e.up.setConstant(0.05f);
  const GenerationRequest req{"skt background cracked", 3, 9, {16, 32}, Label::positive};
  const auto s1 = generate(b, &a, MergeWeight(0.6), req);
  const auto s2 = generate(b, &a, MergeWeight(0.6), req);
  REQUIRE(s1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s1[i].id == s2[i].id);
    CHECK(s1[i].image() == s2[i].image());
    CHECK(s1[i].label == Label::positive);
    CHECK(s1[i].source == Source::diffusion);
    CHECK(s1[i].image().resolution() == Resolution{16, 32});
  }
  CHECK(s1[0].id != s1[1].id);
  CHECK(generate(b, &a, MergeWeight(0.0), req)[0].image() == generate(b, nullptr, MergeWeight(0.0), req)[0].image());
  CHECK(generate(b, &a, MergeWeight(1.0), req)[0].image() != s1[0].image());
  CHECK(generate(b, nullptr, MergeWeight(0.0), {"p", 0, 0, {16, 32}, Label::positive}).empty());
  CHECK_THROWS_AS(generate(b, nullptr, MergeWeight(0.0), {"p", -1, 0, {16, 32}, Label::positive}), ValidationError);
}

TEST_CASE("regularization set is cached and reused") {
  const auto dir = oracle::scratch_dir("regcache");
  const ToyDiffusionBackend b(small_config(), 5);
  const auto a = prepare_regularization_set(b, "background", 3, 7, {16, 32}, dir);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  const auto c = prepare_regularization_set(b, "background", 3, 7, {16, 32}, dir);
  REQUIRE(c.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(c[i] == a[i]);
  CHECK(prepare_regularization_set(b, "background", 3, 7, {16, 32})[0] == a[0]);
}

TEST_CASE("denoiser checkpoint round trip keeps the model id") {
  const auto dir = oracle::scratch_dir("denoiser");
  const ToyDiffusionBackend b(small_config(), 6);
  b.save(dir / "d.safetensors");
  const ToyDiffusionBackend c = ToyDiffusionBackend::load(dir / "d.safetensors");
  CHECK(c.model_id() == b.model_id());
  CHECK(same_weights(c.base_weights(), b.base_weights()));
  CHECK(ToyDiffusionBackend(small_config(), 7).model_id() != b.model_id());
}
