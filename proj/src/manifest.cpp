#include "inout/manifest.hpp"

#include <fstream>
#include <unordered_set>

#include "inout/digest.hpp"
#include "inout/errors.hpp"

namespace inout {

std::string_view to_string(Label label) { return label == Label::positive ? "positive" : "negative"; }

std::string_view to_string(Source source) {
  switch (source) {
    case Source::original: return "original";
    case Source::diffusion: return "diffusion";
    case Source::region: return "region";
  }
  return "original";
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Label parse_label(std::string_view text) {
  if (text == "positive") return Label::positive;
  if (text == "negative") return Label::negative;
  throw ValidationError("unknown label: " + std::string(text));
}

Source parse_source(std::string_view text) {
  if (text == "original") return Source::original;
  if (text == "diffusion") return Source::diffusion;
  if (text == "region") return Source::region;
  throw ValidationError("unknown source: " + std::string(text));
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ValidationError("unknown split: " + std::string(text));
}

const Image& Sample::image() const {
  if (!pixels) throw ValidationError("sample '" + id + "' has no pixels loaded");
  return *pixels;
}

Sample make_sample(std::string id, Image pixels, Label label, Source source, Split split, std::string path) {
  Sample s;
  s.id = std::move(id);
  s.path = std::move(path);
  s.label = label;
  s.source = source;
  s.split = split;
  s.digest = image_digest(pixels);
  s.pixels = std::make_shared<const Image>(std::move(pixels));
  return s;
}

DatasetManifest::DatasetManifest(std::vector<Sample> samples, Resolution target_resolution, nlohmann::json metadata)
    : samples_(std::move(samples)), target_(target_resolution), metadata_(std::move(metadata)) {
  std::unordered_set<std::string> seen;
  Sha256 h;
  h.update("inout-manifest-v1\n");
  h.update(std::to_string(target_.width) + "x" + std::to_string(target_.height) + "\n");
  for (const Sample& s : samples_) {
    if (!seen.insert(s.id).second) throw ValidationError("duplicate sample id: " + s.id);
    SplitCounts& c = s.split == Split::train ? train_ : test_;
    (s.label == Label::positive ? c.positive : c.negative)++;
    h.update(s.id).update("\t").update(to_string(s.label)).update("\t").update(to_string(s.source));
    h.update("\t").update(to_string(s.split)).update("\t").update(s.digest).update("\n");
  }
  hash_ = h.hex();
}

std::vector<Sample> DatasetManifest::select(Split split) const {
  std::vector<Sample> out;
  for (const Sample& s : samples_)
    if (s.split == split) out.push_back(s);
  return out;
}

std::vector<Sample> DatasetManifest::select(Split split, Label label) const {
  std::vector<Sample> out;
  for (const Sample& s : samples_)
    if (s.split == split && s.label == label) out.push_back(s);
  return out;
}

const Sample* DatasetManifest::find(std::string_view id) const {
  for (const Sample& s : samples_)
    if (s.id == id) return &s;
  return nullptr;
}

bool DatasetManifest::has_pixels() const {
  for (const Sample& s : samples_)
    if (!s.pixels) return false;
  return true;
}

namespace {

nlohmann::json counts_json(const SplitCounts& c) { return {{"negative", c.negative}, {"positive", c.positive}}; }

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest: " + path.string());
  nlohmann::json header = {
      {"kind", "inout-manifest"},
      {"version", 1},
      {"target_resolution", {manifest.target_resolution().width, manifest.target_resolution().height}},
      {"content_hash", manifest.content_hash()},
      {"counts", {{"train", counts_json(manifest.counts(Split::train))}, {"test", counts_json(manifest.counts(Split::test))}}},
      {"metadata", manifest.metadata()},
  };
  out << header.dump() << '\n';
  for (const Sample& s : manifest.samples()) {
    nlohmann::json rec = {{"id", s.id},
                          {"path", s.path},
                          {"label", to_string(s.label)},
                          {"source", to_string(s.source)},
                          {"split", to_string(s.split)},
                          {"digest", s.digest}};
    out << rec.dump() << '\n';
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestError("empty manifest: " + path.string());
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("kind", "") != "inout-manifest" || header.value("version", 0) != 1) {
      throw IngestError("unsupported manifest header: " + path.string());
    }
    const auto res = header.at("target_resolution");
    std::vector<Sample> samples;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      Sample s;
      s.id = rec.at("id").get<std::string>();
      s.path = rec.value("path", "");
      s.label = parse_label(rec.at("label").get<std::string>());
      s.source = parse_source(rec.at("source").get<std::string>());
      s.split = parse_split(rec.at("split").get<std::string>());
      s.digest = rec.at("digest").get<std::string>();
      samples.push_back(std::move(s));
    }
    DatasetManifest manifest(std::move(samples), {res.at(0).get<int>(), res.at(1).get<int>()},
                             header.value("metadata", nlohmann::json::object()));
    if (manifest.content_hash() != header.at("content_hash").get<std::string>()) {
      throw IngestError("manifest content hash mismatch: " + path.string());
    }
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("malformed manifest " + path.string() + ": " + e.what());
  }
}

Image quantize8(const Image& image) {
  Image out = image;
  for (float& v : out.pixels) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  return out;
}

DatasetManifest save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  std::filesystem::create_directories(dir / "images");
  std::vector<Sample> persisted;
  persisted.reserve(manifest.size());
  for (const Sample& s : manifest.samples()) {
    const std::string rel = "images/" + s.id + ".png";
    Image q = quantize8(to_rgb(s.image()));
    write_png(dir / rel, q);
    persisted.push_back(make_sample(s.id, std::move(q), s.label, s.source, s.split, rel));
  }
  DatasetManifest out(std::move(persisted), manifest.target_resolution(), manifest.metadata());
  write_manifest(dir / "manifest.jsonl", out);
  return out;
}

DatasetManifest load_dataset_dir(const std::filesystem::path& dir) {
  const DatasetManifest bare = read_manifest(dir / "manifest.jsonl");
  std::vector<Sample> samples;
  samples.reserve(bare.size());
  for (const Sample& s : bare.samples()) {
    Image img = read_png(dir / s.path);
    if (img.channels == 1) img = to_rgb(img);
    Sample loaded = make_sample(s.id, std::move(img), s.label, s.source, s.split, s.path);
    if (loaded.digest != s.digest) throw IngestError("pixel digest mismatch for " + (dir / s.path).string());
    samples.push_back(std::move(loaded));
  }
  return DatasetManifest(std::move(samples), bare.target_resolution(), bare.metadata());
}

}  // namespace inout
