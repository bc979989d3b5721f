#include <doctest.h>

#include "inout/errors.hpp"
#include "inout/mixer.hpp"
#include "inout/synthetic.hpp"
#include "oracles.hpp"

using namespace inout;

namespace {

DatasetManifest base_manifest(int train_neg = 20, int train_pos = 8) {
  SyntheticConfig c;
  c.resolution = {16, 32};
  c.train_negatives = train_neg;
  c.train_positives = train_pos;
  c.test_negatives = 6;
  c.test_positives = 4;
  return make_synthetic_dataset(c);
}

DiffusionGenerator fake_diffusion() {
  return [](const std::string& prompt, int count, std::uint64_t seed) {
    std::vector<Sample> out;
    for (int i = 0; i < count; ++i) {
      out.push_back(make_sample("d_" + prompt.substr(prompt.size() - 3) + "_" + std::to_string(seed) + "_" + std::to_string(i),
                                Image(16, 32, 3, 0.9f), Label::positive, Source::diffusion, Split::train));
    }
    return out;
  };
}

std::size_t count_source(const DatasetManifest& m, Source s) {
  std::size_t n = 0;
  for (const auto& x : m.samples()) n += x.source == s && x.split == Split::train ? 1 : 0;
  return n;
}

AugmentationPlan plan_of(Scenario s, int n, int n_aug, Policy p, std::uint64_t seed = 0) {
  AugmentationPlan plan;
  plan.scenario = s;
  plan.shots = n;
  plan.n_aug = n_aug;
  plan.policy = p;
  plan.seed = seed;
  return plan;
}

}  // namespace

TEST_CASE("plan validation") {
  CHECK_THROWS_AS(plan_of(Scenario::n_shot, 5, 3, Policy::inout).validate(), ValidationError);
  CHECK_NOTHROW(plan_of(Scenario::n_shot, 5, 3, Policy::region_only).validate());
  CHECK_THROWS_AS(plan_of(Scenario::zero_shot, 5, 80, Policy::inout).validate(), ValidationError);
  CHECK_THROWS_AS(plan_of(Scenario::n_shot, -1, 0, Policy::inout).validate(), ValidationError);
  AugmentationPlan p = plan_of(Scenario::n_shot, 2, 0, Policy::inout);
  p.shot_ids = {"a"};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  const AugmentationPlan q = plan_of(Scenario::n_shot, 3, 40, Policy::diffusion_only, 9);
  CHECK(AugmentationPlan::from_json(q.to_json()).to_json() == q.to_json());
}

TEST_CASE("composition counts per policy") {
  const DatasetManifest base = base_manifest();
  const RegionGenerator region = make_region_generator(base, RegionAugmentConfig{});
  for (Policy p : {Policy::inout, Policy::diffusion_only, Policy::region_only}) {
    for (int n_aug : {0, 4, 10}) {
      for (int n : {0, 3}) {
        const DatasetManifest m =
            build_dataset(base, plan_of(n == 0 ? Scenario::zero_shot : Scenario::n_shot, n, n_aug, p), fake_diffusion(), region);
        CHECK(m.counts(Split::train).positive == static_cast<std::size_t>(n + n_aug));
        CHECK(m.counts(Split::train).negative == 20);
        CHECK(m.counts(Split::test) == base.counts(Split::test));
        const std::size_t diff = count_source(m, Source::diffusion), reg = count_source(m, Source::region);
        if (p == Policy::inout) {
          CHECK(diff == static_cast<std::size_t>(n_aug / 2));
          CHECK(reg == static_cast<std::size_t>(n_aug / 2));
        } else if (p == Policy::diffusion_only) {
          CHECK(diff == static_cast<std::size_t>(n_aug));
          CHECK(reg == 0);
        } else {
          CHECK(reg == static_cast<std::size_t>(n_aug));
          CHECK(diff == 0);
        }
        CHECK(m.metadata().at("parent_manifest") == base.content_hash());
      }
    }
  }
}

TEST_CASE("original negatives and the test split are carried over unchanged") {
  const DatasetManifest base = base_manifest();
  const DatasetManifest m = build_dataset(base, plan_of(Scenario::n_shot, 2, 6, Policy::inout), fake_diffusion(),
                                          make_region_generator(base, RegionAugmentConfig{}));
  for (const auto& s : base.samples()) {
    if (s.split == Split::test || s.label == Label::negative) {
      const Sample* t = m.find(s.id);
      REQUIRE(t != nullptr);
      CHECK(t->digest == s.digest);
      CHECK(t->split == s.split);
    }
  }
}

TEST_CASE("shot selection is deterministic and bounded") {
  const DatasetManifest base = base_manifest();
  CHECK(select_shot_ids(base, 5, 1) == select_shot_ids(base, 5, 1));
  CHECK(select_shot_ids(base, 5, 1).size() == 5);
  CHECK(select_shot_ids(base, 8, 1).size() == 8);
  CHECK_THROWS_AS(select_shot_ids(base, 9, 1), ValidationError);
  AugmentationPlan p = plan_of(Scenario::n_shot, 2, 0, Policy::inout);
  p.shot_ids = {"train_positive_0", "train_positive_5"};
  const DatasetManifest m = build_n_shot(base, p, {}, {});
  CHECK(m.find("train_positive_5") != nullptr);
  CHECK(m.find("train_positive_1") == nullptr);
  p.shot_ids = {"train_positive_0", "train_negative_1"};
  CHECK_THROWS_AS(build_n_shot(base, p, {}, {}), ValidationError);
}

TEST_CASE("composition is deterministic per seed") {
  const DatasetManifest base = base_manifest();
  const auto region = make_region_generator(base, RegionAugmentConfig{});
  const auto plan = plan_of(Scenario::n_shot, 3, 8, Policy::inout, 4);
  CHECK(build_dataset(base, plan, fake_diffusion(), region).content_hash() ==
        build_dataset(base, plan, fake_diffusion(), region).content_hash());
  CHECK(build_dataset(base, plan_of(Scenario::n_shot, 3, 8, Policy::inout, 5), fake_diffusion(), region).content_hash() !=
        build_dataset(base, plan, fake_diffusion(), region).content_hash());
}

TEST_CASE("misbehaving generators and scenario mismatch are rejected") {
  const DatasetManifest base = base_manifest();
  const auto region = make_region_generator(base, RegionAugmentConfig{});
  DiffusionGenerator short_gen = [](const std::string&, int count, std::uint64_t) {
    std::vector<Sample> out;
    for (int i = 0; i + 1 < count; ++i) {
      out.push_back(make_sample("s" + std::to_string(i), Image(16, 32, 3), Label::positive, Source::diffusion, Split::train));
    }
    return out;
  };
  CHECK_THROWS_AS(build_dataset(base, plan_of(Scenario::zero_shot, 0, 4, Policy::inout), short_gen, region), ValidationError);
  DiffusionGenerator mislabeled = [](const std::string&, int count, std::uint64_t) {
    std::vector<Sample> out;
    for (int i = 0; i < count; ++i) {
      out.push_back(make_sample("m" + std::to_string(i), Image(16, 32, 3), Label::positive, Source::region, Split::train));
    }
    return out;
  };
  CHECK_THROWS_AS(build_dataset(base, plan_of(Scenario::zero_shot, 0, 4, Policy::inout), mislabeled, region), ValidationError);
  CHECK_THROWS_AS(build_dataset(base, plan_of(Scenario::zero_shot, 0, 4, Policy::inout), {}, region), ValidationError);
  CHECK_THROWS_AS(build_zero_shot(base, plan_of(Scenario::n_shot, 2, 0, Policy::inout), {}, {}), ValidationError);
}

TEST_CASE("pool generator serves exported samples") {
  std::vector<Sample> pool;
  for (int i = 0; i < 5; ++i) {
    pool.push_back(make_sample("p" + std::to_string(i), Image(16, 32, 3, 0.1f * i), Label::positive, Source::diffusion, Split::train));
  }
  const DiffusionGenerator gen = make_pool_generator(pool);
  const auto a = gen("any", 3, 1);
  CHECK(a.size() == 3);
  CHECK(a[0].id == gen("any", 3, 1)[0].id);
  CHECK_THROWS_AS(gen("any", 6, 1), ValidationError);
  const DatasetManifest base = base_manifest();
  AugmentationPlan plan = plan_of(Scenario::zero_shot, 0, 8, Policy::inout);
  plan.prompts = {"pool"};
  const DatasetManifest m = build_dataset(base, plan, gen, make_region_generator(base, RegionAugmentConfig{}));
  CHECK(count_source(m, Source::diffusion) == 4);
}
