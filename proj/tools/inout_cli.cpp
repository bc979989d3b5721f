#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "inout/classifier.hpp"
#include "inout/diffusion.hpp"
#include "inout/errors.hpp"
#include "inout/evaluation.hpp"
#include "inout/experiment.hpp"
#include "inout/ingest.hpp"
#include "inout/mixer.hpp"
#include "inout/region_augment.hpp"
#include "inout/review_service.hpp"
#include "inout/rng.hpp"
#include "inout/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace inout;

namespace {

json load_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

// Config-file value, replaced by the flag when the flag was given.
template <typename T>
void override_with(const CLI::Option* opt, json& j, const char* key, const T& value) {
  if (opt->count() > 0) j[key] = value;
}

void say(const std::string& text) { std::cout << text << std::endl; }

std::unique_ptr<ToyDiffusionBackend> obtain_backend(const std::string& path, const DatasetManifest* data,
                                                    const json& backend_cfg) {
  if (!path.empty() && fs::exists(path)) return std::make_unique<ToyDiffusionBackend>(ToyDiffusionBackend::load(path));
  const ToyDenoiserConfig toy = ToyDenoiserConfig::from_json(backend_cfg.value("toy", json::object()));
  auto backend = std::make_unique<ToyDiffusionBackend>(toy, backend_cfg.value("init_seed", std::uint64_t{0}));
  if (data) {
    std::vector<Image> images;
    for (const auto& s : data->select(Split::train, Label::negative)) images.push_back(s.image());
    say("pretraining denoiser on " + std::to_string(images.size()) + " negatives");
    backend->pretrain(images, PretrainConfig::from_json(backend_cfg.value("pretrain", json::object())));
  } else {
    std::cerr << "warning: no denoiser checkpoint given; sampling from an untrained model\n";
  }
  if (!path.empty()) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    backend->save(path);
    say("denoiser saved to " + path);
  }
  return backend;
}

struct Ingest {
  std::string root, layout, out = "dataset";
  std::string glob, mask_suffix, split_rule;
  int width = 0, height = 0;
  CLI::Option *o_glob, *o_mask, *o_split, *o_w, *o_h;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("ingest", "Catalogue an image tree into a dataset directory");
    c->add_option("--root", root, "Dataset root")->required();
    c->add_option("--config,--layout", layout, "Layout JSON file");
    o_glob = c->add_option("--image-glob", glob, "Image filename pattern");
    o_mask = c->add_option("--mask-suffix", mask_suffix, "Mask filename suffix");
    o_split = c->add_option("--split-rule", split_rule, "directory | train | test");
    o_w = c->add_option("--width", width, "Target width");
    o_h = c->add_option("--height", height, "Target height");
    c->add_option("--out", out, "Output dataset directory");
    c->callback([this] { run(); });
  }
  void run() {
    json j = load_json(layout);
    override_with(o_glob, j, "image_glob", glob);
    override_with(o_mask, j, "mask_suffix", mask_suffix);
    override_with(o_split, j, "split_rule", split_rule);
    LayoutSpec spec = LayoutSpec::from_json(j);
    if (o_w->count()) spec.target.width = width;
    if (o_h->count()) spec.target.height = height;
    const DatasetManifest m = save_dataset(out, load_dataset(root, spec));
    say("ingested " + std::to_string(m.size()) + " samples (train " + std::to_string(m.counts(Split::train).negative) +
        " neg / " + std::to_string(m.counts(Split::train).positive) + " pos, test " +
        std::to_string(m.counts(Split::test).negative) + " neg / " + std::to_string(m.counts(Split::test).positive) +
        " pos) -> " + out);
    say("content hash " + m.content_hash());
  }
};

struct MakeSynthetic {
  std::string config, out = "synthetic";
  std::uint64_t seed = 0;
  bool tree = false;
  CLI::Option* o_seed;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("make-synthetic", "Write the striped-texture toy dataset");
    c->add_option("--config", config, "Synthetic dataset JSON");
    o_seed = c->add_option("--seed", seed, "Generator seed");
    c->add_flag("--tree", tree, "Write a raw image tree with masks instead of a dataset directory");
    c->add_option("--out", out, "Output directory");
    c->callback([this] { run(); });
  }
  void run() {
    json j = load_json(config);
    override_with(o_seed, j, "seed", seed);
    const SyntheticConfig cfg = SyntheticConfig::from_json(j);
    if (tree) {
      write_image_tree(out, cfg);
      say("image tree written to " + out);
      return;
    }
    const DatasetManifest m = save_dataset(out, make_synthetic_dataset(cfg));
    say("synthetic dataset with " + std::to_string(m.size()) + " samples -> " + out);
  }
};

struct Finetune {
  std::string config, dataset, backend, out = "adapter.safetensors", preset, reg_cache;
  std::string instances = "positive", instance_prompt, class_prompt;
  int epochs = 0, rank = 0, count = 0;
  double lr = 0, prior_weight = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_epochs, *o_rank, *o_lr, *o_prior, *o_seed, *o_count, *o_ip, *o_cp, *o_inst;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("finetune", "Train a low-rank adapter on instance images");
    c->add_option("--config", config, "JSON with 'finetune' and 'backend' sections");
    c->add_option("--dataset", dataset, "Dataset directory")->required();
    c->add_option("--backend", backend, "Denoiser checkpoint (pretrained and written here when missing)");
    c->add_option("--preset", preset, "zero_shot | few_shot | full_shot");
    o_inst = c->add_option("--instances", instances, "positive | negative")->check(CLI::IsMember({"positive", "negative"}));
    o_count = c->add_option("--count", count, "Number of instance images");
    o_ip = c->add_option("--instance-prompt", instance_prompt, "Prompt with the identification token");
    o_cp = c->add_option("--class-prompt", class_prompt, "Regularization prompt");
    o_epochs = c->add_option("--epochs", epochs, "Epochs");
    o_rank = c->add_option("--rank", rank, "Adapter rank");
    o_lr = c->add_option("--lr", lr, "Learning rate");
    o_prior = c->add_option("--prior-weight", prior_weight, "Prior-preservation weight");
    o_seed = c->add_option("--seed", seed, "Seed");
    c->add_option("--reg-cache", reg_cache, "Directory caching regularization images");
    c->add_option("--out", out, "Adapter output path");
    c->callback([this] { run(); });
  }
  void run() {
    const json file = load_json(config);
    json f = file.value("finetune", json::object());
    std::string inst = instances;
    int n = count;
    if (!preset.empty()) {
      const ScenarioPreset p = scenario_preset(preset);
      f["epochs"] = p.epochs;
      f["alpha"] = p.alpha;
      if (!o_inst->count()) inst = p.instances_are_positive ? "positive" : "negative";
      if (!o_count->count()) n = p.instance_count;
    }
    override_with(o_epochs, f, "epochs", epochs);
    override_with(o_rank, f, "rank", rank);
    override_with(o_lr, f, "learning_rate", lr);
    override_with(o_prior, f, "prior_weight", prior_weight);
    override_with(o_seed, f, "seed", seed);
    override_with(o_ip, f, "instance_prompt", instance_prompt);
    override_with(o_cp, f, "class_prompt", class_prompt);
    const FinetuneConfig cfg = FinetuneConfig::from_json(f);
    cfg.validate();

    const DatasetManifest data = load_dataset_dir(dataset);
    auto pool = data.select(Split::train, inst == "positive" ? Label::positive : Label::negative);
    Rng rng(derive_seed(cfg.seed, "instances"));
    std::shuffle(pool.begin(), pool.end(), rng);
    if (n > 0 && static_cast<std::size_t>(n) < pool.size()) pool.resize(static_cast<std::size_t>(n));
    std::vector<Image> images;
    for (const auto& s : pool) images.push_back(s.image());

    auto model = obtain_backend(backend, &data, file.value("backend", json::object()));
    std::optional<fs::path> cache;
    if (!reg_cache.empty()) cache = reg_cache;
    const auto reg = prepare_regularization_set(*model, cfg.class_prompt, cfg.num_regularization_images, cfg.seed,
                                                data.target_resolution(), cache);
    say("fine-tuning on " + std::to_string(images.size()) + " " + inst + " instances, " + std::to_string(reg.size()) +
        " regularization images");
    FinetuneResult r = finetune(*model, images, reg, cfg);
    for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) {
      std::printf("epoch %zu probe loss %.6f train loss %.6f\n", e + 1, r.epoch_losses[e], r.train_losses[e]);
    }
    r.adapter.metadata["epoch_losses"] = r.epoch_losses;
    r.adapter.metadata["train_losses"] = r.train_losses;
    save_adapter(r.adapter, out);
    say("adapter " + r.adapter.digest() + " -> " + out);
  }
};

struct Generate {
  std::string config, backend, adapter, prompt, out = "generated";
  int count = 0, width = 0, height = 0;
  double alpha = 0.6;
  std::uint64_t seed = 0;
  CLI::Option *o_prompt, *o_count, *o_alpha, *o_seed, *o_w, *o_h;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("generate", "Sample images from the (adapted) denoiser");
    c->add_option("--config", config, "JSON with a 'generate' section");
    c->add_option("--backend", backend, "Denoiser checkpoint");
    c->add_option("--adapter", adapter, "Adapter file");
    o_prompt = c->add_option("--prompt", prompt, "Prompt");
    o_count = c->add_option("--count", count, "Number of images");
    o_alpha = c->add_option("--alpha", alpha, "Adapter merge weight in [0,1]");
    o_seed = c->add_option("--seed", seed, "Seed");
    o_w = c->add_option("--width", width, "Width");
    o_h = c->add_option("--height", height, "Height");
    c->add_option("--out", out, "Output dataset directory");
    c->callback([this] { run(); });
  }
  void run() {
    const json file = load_json(config);
    json g = file.value("generate", json::object());
    override_with(o_prompt, g, "prompt", prompt);
    override_with(o_count, g, "count", count);
    override_with(o_alpha, g, "alpha", alpha);
    override_with(o_seed, g, "seed", seed);
    override_with(o_w, g, "width", width);
    override_with(o_h, g, "height", height);
    GenerationRequest req;
    req.prompt = g.value("prompt", "");
    req.count = g.value("count", 0);
    req.seed = g.value("seed", std::uint64_t{0});
    req.resolution = {g.value("width", 32), g.value("height", 96)};
    if (req.prompt.empty()) throw ValidationError("generate: --prompt is required");
    const MergeWeight a(g.value("alpha", 0.6));
    auto model = obtain_backend(g.value("backend", backend), nullptr, file.value("backend", json::object()));
    std::optional<LoraAdapter> lora;
    const std::string adapter_path = g.value("adapter", adapter);
    if (!adapter_path.empty()) lora = load_adapter(adapter_path);
    auto samples = generate(*model, lora ? &*lora : nullptr, a, req);
    for (auto& s : samples) s = make_sample(s.id, quantize8(s.image()), s.label, s.source, s.split);
    const DatasetManifest m = save_dataset(out, DatasetManifest(std::move(samples), req.resolution,
                                                                {{"prompt", req.prompt}, {"alpha", a.value()}}));
    say("generated " + std::to_string(m.size()) + " images -> " + out);
  }
};

struct AugmentRegion {
  std::string config, dataset, out = "region";
  int count = 0;
  std::uint64_t seed = 0;
  bool masks = false;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("augment-region", "Superimpose noise regions on train negatives");
    c->add_option("--config", config, "Region augmentation JSON");
    c->add_option("--dataset", dataset, "Dataset directory")->required();
    c->add_option("--count", count, "Number of samples")->required();
    c->add_option("--seed", seed, "Seed");
    c->add_flag("--masks", masks, "Also write the masks");
    c->add_option("--out", out, "Output dataset directory");
    c->callback([this] { run(); });
  }
  void run() {
    const json file = load_json(config);
    const RegionAugmentConfig cfg = RegionAugmentConfig::from_json(file.value("region", file));
    if (count < 0) throw ValidationError("augment-region: count must be >= 0");
    const DatasetManifest data = load_dataset_dir(dataset);
    const auto negatives = data.select(Split::train, Label::negative);
    if (negatives.empty()) throw ValidationError("augment-region: dataset has no train negatives");
    const auto noise = make_noise_source(cfg);
    std::vector<Sample> samples;
    for (int i = 0; i < count; ++i) {
      const auto k = static_cast<std::uint64_t>(i);
      const Sample& base = negatives[derive_seed(seed, "region-base", k) % negatives.size()];
      RegionAugmentResult r =
          augment_region(base.image(), cfg, *noise, derive_seed(seed, "region", k), "region_" + std::to_string(i));
      if (masks) {
        fs::create_directories(fs::path(out) / "masks");
        write_png(fs::path(out) / "masks" / (r.sample.id + ".png"), r.mask);
      }
      samples.push_back(make_sample(r.sample.id, quantize8(r.sample.image()), Label::positive, Source::region,
                                    Split::train));
    }
    const DatasetManifest m =
        save_dataset(out, DatasetManifest(std::move(samples), data.target_resolution(), {{"region", cfg.to_json()}}));
    say("wrote " + std::to_string(m.size()) + " region samples -> " + out);
  }
};

struct BuildDataset {
  std::string config, dataset, backend, adapter, pool, out = "built";
  std::string scenario, policy;
  int shots = 0, n_aug = 0;
  double alpha = 0.6;
  std::uint64_t seed = 0;
  std::vector<std::string> prompts;
  CLI::Option *o_scn, *o_pol, *o_n, *o_naug, *o_seed, *o_prompts, *o_alpha;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("build-dataset", "Compose an augmented training set");
    c->add_option("--config", config, "JSON with 'plan', 'region', 'backend' sections");
    c->add_option("--dataset", dataset, "Source dataset directory");
    o_scn = c->add_option("--scenario", scenario, "zero_shot | n_shot");
    o_n = c->add_option("--n,--shots", shots, "Original positives kept (N)");
    o_naug = c->add_option("--n-aug", n_aug, "Synthetic positives (N_aug)");
    o_pol = c->add_option("--policy", policy, "inout | diffusion_only | region_only");
    o_seed = c->add_option("--seed", seed, "Seed");
    o_prompts = c->add_option("--prompt", prompts, "Generation prompt (repeatable)");
    c->add_option("--backend", backend, "Denoiser checkpoint");
    c->add_option("--adapter", adapter, "Adapter file");
    o_alpha = c->add_option("--alpha", alpha, "Adapter merge weight");
    c->add_option("--pool", pool, "Exported review session directory used as the diffusion pool");
    c->add_option("--out", out, "Output dataset directory");
    c->callback([this] { run(); });
  }
  void run() {
    const json file = load_json(config);
    json p = file.value("plan", json::object());
    override_with(o_scn, p, "scenario", scenario);
    override_with(o_n, p, "N", shots);
    override_with(o_naug, p, "N_aug", n_aug);
    override_with(o_pol, p, "policy", policy);
    override_with(o_seed, p, "seed", seed);
    override_with(o_prompts, p, "prompts", prompts);
    if (!p.contains("scenario")) p["scenario"] = p.value("N", 0) > 0 ? "n_shot" : "zero_shot";
    const AugmentationPlan plan = AugmentationPlan::from_json(p);
    plan.validate();
    if (dataset.empty()) throw ValidationError("build-dataset: --dataset is required");
    const DatasetManifest data = load_dataset_dir(dataset);
    const RegionAugmentConfig region = RegionAugmentConfig::from_json(file.value("region", json::object()));

    DiffusionGenerator diffusion_gen;
    std::unique_ptr<ToyDiffusionBackend> model;
    std::optional<LoraAdapter> lora;
    double a = file.value("alpha", 0.6);
    if (o_alpha->count()) a = alpha;
    if (!pool.empty()) {
      diffusion_gen = make_pool_generator(load_dataset_dir(pool).samples());
    } else if (plan.policy != Policy::region_only && plan.n_aug > 0) {
      model = obtain_backend(backend, &data, file.value("backend", json::object()));
      if (!adapter.empty()) lora = load_adapter(adapter);
      const Resolution res = data.target_resolution();
      diffusion_gen = [&, a](const std::string& prompt, int count, std::uint64_t s) {
        auto samples = generate(*model, lora ? &*lora : nullptr, MergeWeight(a), {prompt, count, s, res, Label::positive});
        for (auto& x : samples) x = make_sample(x.id, quantize8(x.image()), x.label, x.source, x.split);
        return samples;
      };
    }
    RegionGenerator base = make_region_generator(data, region);
    RegionGenerator region_gen = [&](int count, std::uint64_t s) {
      auto samples = base(count, s);
      for (auto& x : samples) x = make_sample(x.id, quantize8(x.image()), x.label, x.source, x.split);
      return samples;
    };
    const DatasetManifest built = save_dataset(out, build_dataset(data, plan, diffusion_gen, region_gen));
    const SplitCounts tr = built.counts(Split::train);
    say("train " + std::to_string(tr.negative) + " neg / " + std::to_string(tr.positive) + " pos; test " +
        std::to_string(built.counts(Split::test).total()) + " -> " + out);
    say("content hash " + built.content_hash());
  }
};

struct Train {
  std::string config, dataset, out = "classifier.safetensors", scores;
  int epochs = 0, batch = 0;
  double lr = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_epochs, *o_batch, *o_lr, *o_seed;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train the defect classifier on a built dataset");
    c->add_option("--config", config, "Training JSON");
    c->add_option("--dataset", dataset, "Dataset directory")->required();
    o_epochs = c->add_option("--epochs", epochs, "Epochs");
    o_batch = c->add_option("--batch-size", batch, "Batch size");
    o_lr = c->add_option("--lr", lr, "Learning rate");
    o_seed = c->add_option("--seed", seed, "Seed");
    c->add_option("--out", out, "Classifier output path");
    c->add_option("--scores", scores, "Also score the test split into this CSV");
    c->callback([this] { run(); });
  }
  void run() {
    const json file = load_json(config);
    json t = file.value("train", file);
    override_with(o_epochs, t, "epochs", epochs);
    override_with(o_batch, t, "batch_size", batch);
    override_with(o_lr, t, "learning_rate", lr);
    override_with(o_seed, t, "seed", seed);
    const TrainConfig cfg = TrainConfig::from_json(t);
    const DatasetManifest data = load_dataset_dir(dataset);
    const DefectClassifier model = train_classifier(data, cfg);
    model.save(out, {{"train_manifest", data.content_hash()}});
    say("classifier -> " + out);
    if (!scores.empty()) {
      write_scores(scores, predict_scores(model, data));
      say("scores -> " + scores);
    }
  }
};

struct Evaluate {
  std::vector<std::string> score_files;
  std::string method = "run", format = "text", out;
  int n_aug = 0;
  double tau = 0.5;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "Compute AP / precision / recall from score files (one per seed)");
    c->add_option("--scores", score_files, "Score CSV files")->required();
    c->add_option("--tau", tau, "Decision threshold for precision and recall");
    c->add_option("--method", method, "Row label");
    c->add_option("--n-aug", n_aug, "N_aug recorded in the row");
    c->add_option("--format", format, "text | csv")->check(CLI::IsMember({"text", "csv"}));
    c->add_option("--out", out, "Write the report here instead of stdout");
    c->callback([this] { run(); });
  }
  void run() {
    std::vector<MetricsTriple> runs;
    for (const auto& f : score_files) {
      const ClassifierRunResult r = read_scores(f);
      const OperatingPoint op = precision_recall_at_threshold(r.scores, r.labels, tau);
      if (op.no_predictions) std::cerr << "note: no score reaches tau in " << f << "; precision reported as 0\n";
      runs.push_back({average_precision(r.scores, r.labels), op.precision, op.recall});
    }
    MetricsReport report;
    report.threshold = tau;
    report.rows.push_back(MetricsReport::from_runs(method, n_aug, runs));
    const std::string doc = emit_report(report, format == "csv" ? ReportFormat::csv : ReportFormat::text);
    if (out.empty()) {
      std::cout << doc;
    } else {
      std::ofstream(out) << doc;
      say("report -> " + out);
    }
  }
};

struct RunExperiment {
  std::string config, output_dir;
  int workers = 0;
  std::vector<std::uint64_t> seeds;
  CLI::Option *o_out, *o_workers, *o_seeds;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("run-experiment", "Run a full scenario x policy x N_aug x seed grid");
    c->add_option("--config", config, "Experiment JSON")->required();
    o_out = c->add_option("--output-dir", output_dir, "Run directory");
    o_workers = c->add_option("--workers", workers, "Parallel grid cells");
    o_seeds = c->add_option("--seeds", seeds, "Seed list");
    c->callback([this] { run(); });
  }
  void run() {
    ExperimentConfig cfg = load_experiment_config(config);
    apply_env_overrides(cfg);
    if (o_out->count()) cfg.output_dir = output_dir;
    if (o_workers->count()) cfg.workers = workers;
    if (o_seeds->count()) cfg.seeds = seeds;
    const ExperimentResult r = run_experiment(cfg);
    std::cout << emit_report(r.report, ReportFormat::text);
    std::size_t cached = 0;
    for (const auto& c : r.cells) cached += c.cached ? 1 : 0;
    say(std::to_string(r.cells.size()) + " cells (" + std::to_string(cached) + " reused); report -> " +
        (fs::path(cfg.output_dir) / "report.txt").string());
  }
};

struct Serve {
  std::string backend, adapter, state_dir = "review_state", host = "127.0.0.1", token;
  int port = 8080, width = 32, height = 96;
  double alpha = 0.6;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("serve", "Run the review HTTP service");
    c->add_option("--backend", backend, "Denoiser checkpoint");
    c->add_option("--adapter", adapter, "Adapter file");
    c->add_option("--alpha", alpha, "Adapter merge weight");
    c->add_option("--state-dir", state_dir, "Session event logs and images");
    c->add_option("--host", host, "Bind address");
    c->add_option("--port", port, "Port");
    c->add_option("--token", token, "Operator token");
    c->add_option("--width", width, "Sample width");
    c->add_option("--height", height, "Sample height");
    c->callback([this] { run(); });
  }
  void run() {
    auto model = obtain_backend(backend, nullptr, json::object());
    std::optional<LoraAdapter> lora;
    if (!adapter.empty()) lora = load_adapter(adapter);
    ReviewService service(*model, lora ? &*lora : nullptr, {state_dir, {width, height}, alpha, token});
    ReviewServer server(service);
    say("serving on http://" + host + ":" + std::to_string(port));
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inout: defect-image augmentation toolkit"};
  app.require_subcommand(1);
  Ingest ingest;
  MakeSynthetic synthetic;
  Finetune finetune_cmd;
  Generate generate_cmd;
  AugmentRegion region;
  BuildDataset build;
  Train train;
  Evaluate evaluate;
  RunExperiment experiment;
  Serve serve;
  ingest.attach(app);
  synthetic.attach(app);
  finetune_cmd.attach(app);
  generate_cmd.attach(app);
  region.attach(app);
  build.attach(app);
  train.attach(app);
  evaluate.attach(app);
  experiment.attach(app);
  serve.attach(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
