#include "inout/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "inout/digest.hpp"
#include "inout/errors.hpp"
#include "inout/lora.hpp"
#include "inout/rng.hpp"

namespace fs = std::filesystem;

namespace inout {

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment: seeds list is empty");
  if (n_aug.empty()) throw ConfigError("experiment: n_aug list is empty");
  if (policies.empty()) throw ConfigError("experiment: policies list is empty");
  if (dataset.dataset_dir.empty() && !dataset.synthetic) {
    throw ConfigError("experiment: dataset needs either 'dataset_dir' or 'synthetic'");
  }
  if (workers < 1) throw ConfigError("experiment: workers must be >= 1");
  if (zero_shot_instances < 0) throw ConfigError("experiment: zero_shot_instances must be >= 0");
  for (Policy p : policies) {
    for (int n : n_aug) {
      AugmentationPlan plan;
      plan.scenario = scenario;
      plan.shots = shots;
      plan.n_aug = n;
      plan.policy = p;
      plan.prompts = prompts;
      plan.validate();
    }
  }
  finetune.validate();
  train.validate();
  region.validate();
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    c.dataset.dataset_dir = d.value("dataset_dir", "");
    if (d.contains("synthetic")) c.dataset.synthetic = SyntheticConfig::from_json(d["synthetic"]);
  }
  c.scenario = parse_scenario(j.value("scenario", "n_shot"));
  c.shots = j.value("N", c.scenario == Scenario::zero_shot ? 0 : c.shots);
  c.shot_seed = j.value("shot_seed", c.shot_seed);
  if (j.contains("policies")) {
    c.policies.clear();
    for (const auto& p : j["policies"]) c.policies.push_back(parse_policy(p.get<std::string>()));
  }
  if (j.contains("n_aug")) c.n_aug = j["n_aug"].get<std::vector<int>>();
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("prompts")) c.prompts = j["prompts"].get<std::vector<std::string>>();
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    if (b.contains("toy")) c.backend.toy = ToyDenoiserConfig::from_json(b["toy"]);
    if (b.contains("pretrain")) c.backend.pretrain = PretrainConfig::from_json(b["pretrain"]);
    c.backend.init_seed = b.value("init_seed", c.backend.init_seed);
    c.backend.checkpoint = b.value("checkpoint", "");
  }
  if (j.contains("finetune")) c.finetune = FinetuneConfig::from_json(j["finetune"]);
  c.zero_shot_instances = j.value("zero_shot_instances", c.zero_shot_instances);
  if (j.contains("region")) c.region = RegionAugmentConfig::from_json(j["region"]);
  if (j.contains("train")) c.train = TrainConfig::from_json(j["train"]);
  c.threshold = j.value("tau", c.threshold);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json d = nlohmann::json::object();
  if (!dataset.dataset_dir.empty()) d["dataset_dir"] = dataset.dataset_dir;
  if (dataset.synthetic) d["synthetic"] = dataset.synthetic->to_json();
  nlohmann::json pols = nlohmann::json::array();
  for (Policy p : policies) pols.push_back(std::string(to_string(p)));
  nlohmann::json backend_json = {{"toy", backend.toy.to_json()},
                                 {"pretrain", backend.pretrain.to_json()},
                                 {"init_seed", backend.init_seed}};
  if (!backend.checkpoint.empty()) backend_json["checkpoint"] = backend.checkpoint;
  return {{"dataset", d},
          {"scenario", std::string(to_string(scenario))},
          {"N", shots},
          {"shot_seed", shot_seed},
          {"policies", pols},
          {"n_aug", n_aug},
          {"seeds", seeds},
          {"prompts", prompts},
          {"backend", backend_json},
          {"finetune", finetune.to_json()},
          {"zero_shot_instances", zero_shot_instances},
          {"region", region.to_json()},
          {"train", train.to_json()},
          {"tau", threshold},
          {"output_dir", output_dir},
          {"workers", workers}};
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("experiment config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = ExperimentConfig::from_json(j);
  // Relative paths in the file resolve against the file's directory.
  const fs::path base = path.parent_path();
  if (!c.dataset.dataset_dir.empty() && fs::path(c.dataset.dataset_dir).is_relative()) {
    c.dataset.dataset_dir = (base / c.dataset.dataset_dir).lexically_normal().string();
  }
  if (!c.backend.checkpoint.empty() && fs::path(c.backend.checkpoint).is_relative()) {
    c.backend.checkpoint = (base / c.backend.checkpoint).lexically_normal().string();
  }
  return c;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* out = std::getenv("INOUT_OUTPUT_DIR"); out && *out) config.output_dir = out;
  if (const char* data = std::getenv("INOUT_DATASET_DIR"); data && *data) {
    config.dataset.dataset_dir = data;
    config.dataset.synthetic.reset();
  }
}

std::string cell_name(Policy policy, int n_aug, std::uint64_t seed) {
  return std::string(to_string(policy)) + "_" + std::to_string(n_aug) + "_seed" + std::to_string(seed);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

DatasetManifest prepare_dataset(const ExperimentConfig& config) {
  if (!config.dataset.dataset_dir.empty()) return load_dataset_dir(config.dataset.dataset_dir);
  const DatasetManifest built = make_synthetic_dataset(*config.dataset.synthetic);
  const fs::path dir = fs::path(config.output_dir) / "dataset";
  if (fs::exists(dir / "manifest.jsonl")) {
    try {
      if (read_manifest(dir / "manifest.jsonl").content_hash() == built.content_hash()) return built;
    } catch (const Error&) {
      // stale or partial copy; rewritten below
    }
  }
  return save_dataset(dir, built);
}

std::vector<Image> pixels_of(const std::vector<Sample>& samples) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.image());
  return out;
}

std::unique_ptr<ToyDiffusionBackend> prepare_backend(const ExperimentConfig& config, const DatasetManifest& data) {
  if (!config.backend.checkpoint.empty()) {
    return std::make_unique<ToyDiffusionBackend>(ToyDiffusionBackend::load(config.backend.checkpoint));
  }
  const nlohmann::json key = {{"toy", config.backend.toy.to_json()},
                              {"pretrain", config.backend.pretrain.to_json()},
                              {"init_seed", config.backend.init_seed},
                              {"dataset", data.content_hash()}};
  const fs::path path =
      fs::path(config.output_dir) / "backend" / ("denoiser-" + sha256_hex(key.dump()).substr(0, 24) + ".safetensors");
  if (fs::exists(path)) return std::make_unique<ToyDiffusionBackend>(ToyDiffusionBackend::load(path));
  auto backend = std::make_unique<ToyDiffusionBackend>(config.backend.toy, config.backend.init_seed);
  const auto images = pixels_of(data.select(Split::train, Label::negative));
  backend->pretrain(images, config.backend.pretrain);
  fs::create_directories(path.parent_path());
  backend->save(path);
  return backend;
}

std::vector<Sample> finetune_instances(const ExperimentConfig& config, const DatasetManifest& data,
                                       const std::vector<std::string>& shot_ids) {
  std::vector<Sample> out;
  if (config.scenario == Scenario::n_shot) {
    for (const auto& id : shot_ids) out.push_back(*data.find(id));
    return out;
  }
  auto negatives = data.select(Split::train, Label::negative);
  Rng rng(derive_seed(config.shot_seed, "zero-shot-instances"));
  std::shuffle(negatives.begin(), negatives.end(), rng);
  const auto n = std::min<std::size_t>(negatives.size(), static_cast<std::size_t>(config.zero_shot_instances));
  out.assign(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

std::optional<LoraAdapter> prepare_adapter(const ExperimentConfig& config, const DiffusionBackend& backend,
                                           const std::vector<Sample>& instances, Resolution resolution) {
  if (instances.empty()) return std::nullopt;
  Sha256 h;
  h.update(backend.model_id());
  h.update(config.finetune.digest());
  for (const auto& s : instances) h.update(s.digest);
  const fs::path dir = fs::path(config.output_dir) / "adapter";
  const fs::path path = dir / ("lora-" + h.hex().substr(0, 24) + ".safetensors");
  if (fs::exists(path)) return load_adapter(path);
  const auto reg = prepare_regularization_set(backend, config.finetune.class_prompt,
                                              config.finetune.num_regularization_images, config.finetune.seed,
                                              resolution, dir);
  const auto images = pixels_of(instances);
  FinetuneResult result = finetune(backend, images, reg, config.finetune);
  result.adapter.metadata["epoch_losses"] = result.epoch_losses;
  result.adapter.metadata["train_losses"] = result.train_losses;
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& s : instances) ids.push_back(s.id);
  result.adapter.metadata["instance_ids"] = ids;
  fs::create_directories(dir);
  save_adapter(result.adapter, path);
  return load_adapter(path);
}

Sample quantized(const Sample& s) { return make_sample(s.id, quantize8(s.image()), s.label, s.source, s.split); }

struct Shared {
  const ExperimentConfig* config;
  const DatasetManifest* data;
  const DiffusionBackend* backend;
  const LoraAdapter* adapter;
  std::vector<std::string> shot_ids;
};

struct CellSpec {
  Policy policy;
  int n_aug;
  std::uint64_t seed;
};

CellResult run_cell(const Shared& sh, const CellSpec& spec) {
  const ExperimentConfig& config = *sh.config;
  AugmentationPlan plan;
  plan.scenario = config.scenario;
  plan.shots = config.shots;
  plan.n_aug = spec.n_aug;
  plan.policy = spec.policy;
  plan.prompts = config.prompts;
  plan.seed = spec.seed;
  plan.shot_ids = sh.shot_ids;
  TrainConfig train = config.train;
  train.seed = spec.seed;

  const nlohmann::json inputs = {
      {"dataset", sh.data->content_hash()},
      {"plan", plan.to_json()},
      {"backend", sh.backend ? sh.backend->model_id() : ""},
      {"adapter", sh.adapter ? sh.adapter->digest() : ""},
      {"alpha", config.finetune.alpha_default},
      {"region", config.region.to_json()},
      {"train", train.to_json()},
      {"tau", config.threshold},
  };
  const std::string key = sha256_hex(inputs.dump());
  const std::string name = cell_name(spec.policy, spec.n_aug, spec.seed);
  const fs::path dir = fs::path(config.output_dir) / "cells" / name;

  CellResult result;
  result.policy = spec.policy;
  result.n_aug = spec.n_aug;
  result.seed = spec.seed;
  result.directory = dir.string();

  if (fs::exists(dir / "cell.json")) {
    try {
      const auto record = read_json(dir / "cell.json");
      if (record.at("key").get<std::string>() == key) {
        const auto& m = record.at("metrics");
        result.metrics = {m.at("ap").get<double>(), m.at("precision").get<double>(), m.at("recall").get<double>()};
        result.no_predictions = record.at("no_predictions").get<bool>();
        result.manifest_hash = record.at("manifest_hash").get<std::string>();
        result.cached = true;
        return result;
      }
    } catch (const std::exception&) {
      // unreadable record: recompute the cell
    }
  }

  std::string stage = "build-dataset";
  try {
    fs::create_directories(dir);
    write_text(dir / "inputs.json", inputs.dump(2) + "\n");
    const Resolution res = sh.data->target_resolution();
    DiffusionGenerator diffusion_gen = [&](const std::string& prompt, int count, std::uint64_t seed) {
      if (!sh.backend) throw BackendError("diffusion samples requested but no backend is prepared");
      GenerationRequest request{prompt, count, seed, res, Label::positive};
      auto samples = generate(*sh.backend, sh.adapter, MergeWeight(config.finetune.alpha_default), request);
      for (auto& s : samples) s = quantized(s);
      return samples;
    };
    RegionGenerator base_region = make_region_generator(*sh.data, config.region);
    RegionGenerator region_gen = [&](int count, std::uint64_t seed) {
      auto samples = base_region(count, seed);
      for (auto& s : samples) s = quantized(s);
      return samples;
    };
    const DatasetManifest built = build_dataset(*sh.data, plan, diffusion_gen, region_gen);
    std::vector<Sample> with_paths;
    for (Sample s : built.samples()) {
      if (s.source != Source::original) {
        s.path = "images/" + s.id + ".png";
        fs::create_directories(dir / "images");
        write_png(dir / s.path, s.image());
      }
      with_paths.push_back(std::move(s));
    }
    const DatasetManifest dataset(std::move(with_paths), built.target_resolution(), built.metadata());
    write_manifest(dir / "manifest.jsonl", dataset);
    result.manifest_hash = dataset.content_hash();

    stage = "train";
    const DefectClassifier model = train_classifier(dataset, train);
    model.save(dir / "classifier.safetensors", {{"train_manifest", dataset.content_hash()}});

    stage = "score";
    ClassifierRunResult scores = predict_scores(model, dataset);
    scores.seed = spec.seed;
    write_scores(dir / "scores.csv", scores);

    stage = "metrics";
    const OperatingPoint op = precision_recall_at_threshold(scores.scores, scores.labels, config.threshold);
    result.metrics = {average_precision(scores.scores, scores.labels), op.precision, op.recall};
    result.no_predictions = op.no_predictions;

    const nlohmann::json record = {
        {"key", key},
        {"cell", name},
        {"manifest_hash", result.manifest_hash},
        {"classifier_sha256", file_digest(dir / "classifier.safetensors")},
        {"scores_sha256", file_digest(dir / "scores.csv")},
        {"metrics",
         {{"ap", result.metrics.ap}, {"precision", result.metrics.precision}, {"recall", result.metrics.recall}}},
        {"no_predictions", result.no_predictions},
    };
    write_text(dir / "cell.json", record.dump(2) + "\n");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name + ":" + stage, spec.seed, e.what());
  }
  return result;
}

MetricsReport assemble(const ExperimentConfig& config, const std::vector<CellSpec>& specs,
                       const std::vector<std::optional<CellResult>>& results, bool complete_rows_only) {
  MetricsReport report;
  report.threshold = config.threshold;
  for (Policy p : config.policies) {
    for (int n : config.n_aug) {
      std::vector<MetricsTriple> runs;
      bool complete = true;
      for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].policy != p || specs[i].n_aug != n) continue;
        if (results[i]) {
          runs.push_back(results[i]->metrics);
        } else {
          complete = false;
        }
      }
      if (runs.empty() || (complete_rows_only && !complete)) continue;
      report.rows.push_back(MetricsReport::from_runs(std::string(to_string(p)), n, runs));
    }
  }
  return report;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  write_text(out / "config.json", config.to_json().dump(2) + "\n");

  ExperimentResult result;
  DatasetManifest data;
  try {
    data = prepare_dataset(config);
  } catch (const std::exception& e) {
    throw StageError("dataset", 0, e.what());
  }
  result.dataset_hash = data.content_hash();

  Shared shared{&config, &data, nullptr, nullptr, {}};
  if (config.scenario == Scenario::n_shot && config.shots > 0) {
    shared.shot_ids = select_shot_ids(data, config.shots, config.shot_seed);
  }

  const bool needs_diffusion =
      std::any_of(config.policies.begin(), config.policies.end(), [](Policy p) { return p != Policy::region_only; }) &&
      std::any_of(config.n_aug.begin(), config.n_aug.end(), [](int n) { return n > 0; });
  std::unique_ptr<ToyDiffusionBackend> backend;
  std::optional<LoraAdapter> adapter;
  if (needs_diffusion) {
    try {
      backend = prepare_backend(config, data);
    } catch (const std::exception& e) {
      throw StageError("backend", config.backend.init_seed, e.what());
    }
    try {
      adapter = prepare_adapter(config, *backend, finetune_instances(config, data, shared.shot_ids),
                                data.target_resolution());
    } catch (const std::exception& e) {
      throw StageError("finetune", config.finetune.seed, e.what());
    }
    shared.backend = backend.get();
    shared.adapter = adapter ? &*adapter : nullptr;
    result.backend_id = backend->model_id();
    result.adapter_digest = adapter ? adapter->digest() : "";
  }

  std::vector<CellSpec> specs;
  for (Policy p : config.policies) {
    for (int n : config.n_aug) {
      for (std::uint64_t s : config.seeds) specs.push_back({p, n, s});
    }
  }
  std::vector<std::optional<CellResult>> results(specs.size());
  std::vector<std::exception_ptr> failures(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        results[i] = run_cell(shared, specs[i]);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(config.workers, static_cast<int>(specs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!failures[i]) continue;
    const MetricsReport partial = assemble(config, specs, results, true);
    write_text(out / "report.partial.csv", emit_report(partial, ReportFormat::csv));
    std::rethrow_exception(failures[i]);
  }

  result.report = assemble(config, specs, results, false);
  for (auto& r : results) result.cells.push_back(*r);
  const std::string csv = emit_report(result.report, ReportFormat::csv);
  const std::string text = emit_report(result.report, ReportFormat::text);
  write_text(out / "report.csv", csv);
  write_text(out / "report.txt", text);

  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    const fs::path dir = c.directory;
    cells.push_back({{"cell", fs::path(c.directory).filename().string()},
                     {"record", read_json(dir / "cell.json")},
                     {"inputs", read_json(dir / "inputs.json")}});
  }
  const nlohmann::json provenance = {
      {"config", config.to_json()},
      {"dataset_hash", result.dataset_hash},
      {"backend_id", result.backend_id},
      {"adapter_digest", result.adapter_digest},
      {"shot_ids", shared.shot_ids},
      {"finetune_instance_ids", adapter ? adapter->metadata.value("instance_ids", nlohmann::json::array())
                                        : nlohmann::json::array()},
      {"cells", cells},
      {"report_csv_sha256", sha256_hex(csv)},
      {"report_txt_sha256", sha256_hex(text)},
  };
  write_text(out / "provenance.json", provenance.dump(2) + "\n");
  return result;
}

}  // namespace inout
