#include "inout/mixer.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <set>

#include "inout/errors.hpp"
#include "inout/rng.hpp"

namespace inout {

std::string_view to_string(Scenario s) { return s == Scenario::zero_shot ? "zero_shot" : "n_shot"; }

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::inout: return "inout";
    case Policy::diffusion_only: return "diffusion_only";
    case Policy::region_only: return "region_only";
  }
  return "inout";
}

Scenario parse_scenario(std::string_view text) {
  if (text == "zero_shot") return Scenario::zero_shot;
  if (text == "n_shot") return Scenario::n_shot;
  throw ValidationError("unknown scenario: " + std::string(text));
}

Policy parse_policy(std::string_view text) {
  if (text == "inout") return Policy::inout;
  if (text == "diffusion_only") return Policy::diffusion_only;
  if (text == "region_only") return Policy::region_only;
  throw ValidationError("unknown policy: " + std::string(text));
}

void AugmentationPlan::validate() const {
  if (n_aug < 0) throw ValidationError("plan: N_aug must be >= 0");
  if (shots < 0) throw ValidationError("plan: N must be >= 0");
  if (policy == Policy::inout && n_aug % 2 != 0) {
    throw ValidationError("plan: N_aug must be even under the inout policy (got " + std::to_string(n_aug) + ")");
  }
  if (scenario == Scenario::zero_shot && shots != 0) throw ValidationError("plan: zero_shot requires N = 0");
  if (!shot_ids.empty() && static_cast<int>(shot_ids.size()) != shots) {
    throw ValidationError("plan: shot_ids lists " + std::to_string(shot_ids.size()) + " ids but N = " + std::to_string(shots));
  }
  if (n_aug > 0 && policy != Policy::region_only && prompts.empty()) {
    throw ValidationError("plan: diffusion samples requested but no prompts given");
  }
}

AugmentationPlan AugmentationPlan::from_json(const nlohmann::json& j) {
  AugmentationPlan p;
  p.scenario = parse_scenario(j.value("scenario", "zero_shot"));
  p.shots = j.value("N", 0);
  p.n_aug = j.value("N_aug", 0);
  p.policy = parse_policy(j.value("policy", "inout"));
  if (j.contains("prompts")) p.prompts = j["prompts"].get<std::vector<std::string>>();
  p.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("shot_ids")) p.shot_ids = j["shot_ids"].get<std::vector<std::string>>();
  return p;
}

nlohmann::json AugmentationPlan::to_json() const {
  return {{"scenario", to_string(scenario)}, {"N", shots},   {"N_aug", n_aug},       {"policy", to_string(policy)},
          {"prompts", prompts},              {"seed", seed}, {"shot_ids", shot_ids}};
}

RegionGenerator make_region_generator(const DatasetManifest& manifest, RegionAugmentConfig config) {
  config.validate();
  auto negatives = std::make_shared<const std::vector<Sample>>(manifest.select(Split::train, Label::negative));
  std::shared_ptr<const NoiseSource> noise = make_noise_source(config);
  return [negatives, noise, config](int count, std::uint64_t seed) {
    if (count > 0 && negatives->empty()) throw ValidationError("region augmentation needs train negatives");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
      const auto idx = static_cast<std::size_t>(derive_seed(seed, "region-base", static_cast<std::uint64_t>(i)) %
                                                negatives->size());
      out.push_back(augment_region((*negatives)[idx].image(), config, *noise,
                                   derive_seed(seed, "region", static_cast<std::uint64_t>(i)),
                                   "region_" + std::to_string(seed) + "_" + std::to_string(i))
                        .sample);
    }
    return out;
  };
}

DiffusionGenerator make_pool_generator(std::vector<Sample> pool) {
  auto shared = std::make_shared<const std::vector<Sample>>(std::move(pool));
  return [shared](const std::string&, int count, std::uint64_t seed) {
    if (count > static_cast<int>(shared->size())) {
      throw ValidationError("pool holds " + std::to_string(shared->size()) + " samples but " + std::to_string(count) +
                            " were requested");
    }
    std::vector<std::size_t> order(shared->size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "pool"));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Sample> out;
    for (int i = 0; i < count; ++i) {
      Sample s = (*shared)[order[static_cast<std::size_t>(i)]];
      s.label = Label::positive;
      s.source = Source::diffusion;
      s.split = Split::train;
      out.push_back(std::move(s));
    }
    return out;
  };
}

std::vector<std::string> select_shot_ids(const DatasetManifest& manifest, int count, std::uint64_t seed) {
  const auto positives = manifest.select(Split::train, Label::positive);
  if (count < 0 || static_cast<std::size_t>(count) > positives.size()) {
    throw ValidationError("N = " + std::to_string(count) + " exceeds the " + std::to_string(positives.size()) +
                          " available train positives");
  }
  std::vector<std::size_t> idx(positives.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "shot-selection"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> ids;
  for (std::size_t i : idx) ids.push_back(positives[i].id);
  return ids;
}

namespace {

std::vector<Sample> checked(std::vector<Sample> batch, int expected, Source source, const char* what) {
  if (static_cast<int>(batch.size()) != expected) {
    throw ValidationError(std::string(what) + " generator returned " + std::to_string(batch.size()) + " samples, expected " +
                          std::to_string(expected));
  }
  for (Sample& s : batch) {
    if (s.label != Label::positive || s.source != source) {
      throw ValidationError(std::string(what) + " generator returned a sample not tagged as a " + what + " positive");
    }
    s.split = Split::train;
  }
  return batch;
}

std::vector<Sample> diffusion_batch(const AugmentationPlan& plan, int count, const DiffusionGenerator& gen) {
  if (count == 0) return {};
  if (!gen) throw ValidationError("diffusion samples requested but no diffusion generator supplied");
  const int prompts = static_cast<int>(plan.prompts.size());
  std::vector<std::vector<Sample>> per_prompt;
  for (int p = 0; p < prompts; ++p) {
    const int n = count / prompts + (p < count % prompts ? 1 : 0);
    per_prompt.push_back(checked(gen(plan.prompts[p], n, derive_seed(plan.seed, "diffusion", static_cast<std::uint64_t>(p))),
                                 n, Source::diffusion, "diffusion"));
  }
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) out.push_back(std::move(per_prompt[i % prompts][i / prompts]));
  return out;
}

DatasetManifest compose(const DatasetManifest& manifest, const AugmentationPlan& plan,
                        const DiffusionGenerator& diffusion_gen, const RegionGenerator& region_gen) {
  plan.validate();
  std::vector<std::string> shot_ids = plan.shot_ids;
  if (shot_ids.empty() && plan.shots > 0) shot_ids = select_shot_ids(manifest, plan.shots, plan.seed);
  const std::set<std::string> wanted(shot_ids.begin(), shot_ids.end());
  if (wanted.size() != shot_ids.size()) throw ValidationError("plan: duplicate shot ids");

  int diffusion_count = 0, region_count = 0;
  switch (plan.policy) {
    case Policy::inout: diffusion_count = region_count = plan.n_aug / 2; break;
    case Policy::diffusion_only: diffusion_count = plan.n_aug; break;
    case Policy::region_only: region_count = plan.n_aug; break;
  }

  std::vector<Sample> train, shots, test;
  for (const Sample& s : manifest.samples()) {
    if (s.split == Split::test) {
      test.push_back(s);
    } else if (s.label == Label::negative) {
      train.push_back(s);
    } else if (wanted.contains(s.id)) {
      shots.push_back(s);
    }
  }
  if (shots.size() != wanted.size()) {
    throw ValidationError("plan: some shot ids are not train positives of the manifest");
  }
  train.insert(train.end(), shots.begin(), shots.end());
  for (Sample& s : diffusion_batch(plan, diffusion_count, diffusion_gen)) train.push_back(std::move(s));
  if (region_count > 0) {
    if (!region_gen) throw ValidationError("region samples requested but no region generator supplied");
    for (Sample& s : checked(region_gen(region_count, derive_seed(plan.seed, "region-batch")), region_count,
                             Source::region, "region")) {
      train.push_back(std::move(s));
    }
  }
  train.insert(train.end(), test.begin(), test.end());

  nlohmann::json meta = {{"plan", plan.to_json()}, {"shot_ids", shot_ids}, {"parent_manifest", manifest.content_hash()}};
  return DatasetManifest(std::move(train), manifest.target_resolution(), std::move(meta));
}

}  // namespace

DatasetManifest build_zero_shot(const DatasetManifest& manifest, const AugmentationPlan& plan,
                                const DiffusionGenerator& diffusion_gen, const RegionGenerator& region_gen) {
  if (plan.scenario != Scenario::zero_shot) throw ValidationError("build_zero_shot: plan scenario is not zero_shot");
  return compose(manifest, plan, diffusion_gen, region_gen);
}

DatasetManifest build_n_shot(const DatasetManifest& manifest, const AugmentationPlan& plan,
                             const DiffusionGenerator& diffusion_gen, const RegionGenerator& region_gen) {
  return compose(manifest, plan, diffusion_gen, region_gen);
}

DatasetManifest build_dataset(const DatasetManifest& manifest, const AugmentationPlan& plan,
                              const DiffusionGenerator& diffusion_gen, const RegionGenerator& region_gen) {
  return plan.scenario == Scenario::zero_shot ? build_zero_shot(manifest, plan, diffusion_gen, region_gen)
                                              : build_n_shot(manifest, plan, diffusion_gen, region_gen);
}

}  // namespace inout
