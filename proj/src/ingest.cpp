#include "inout/ingest.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "inout/errors.hpp"

namespace inout {

LayoutSpec LayoutSpec::from_json(const nlohmann::json& j) {
  LayoutSpec spec;
  spec.image_glob = j.value("image_glob", spec.image_glob);
  spec.mask_suffix = j.value("mask_suffix", spec.mask_suffix);
  spec.split_rule = j.value("split_rule", spec.split_rule);
  spec.train_dir = j.value("train_dir", spec.train_dir);
  spec.test_dir = j.value("test_dir", spec.test_dir);
  if (j.contains("target_resolution")) {
    spec.target = {j["target_resolution"].at(0).get<int>(), j["target_resolution"].at(1).get<int>()};
  }
  if (spec.split_rule != "directory" && spec.split_rule != "train" && spec.split_rule != "test") {
    throw ConfigError("unknown split_rule: " + spec.split_rule);
  }
  if (spec.target.width < 1 || spec.target.height < 1) throw ConfigError("target_resolution must be positive");
  return spec;
}

nlohmann::json LayoutSpec::to_json() const {
  return {{"image_glob", image_glob}, {"mask_suffix", mask_suffix},     {"split_rule", split_rule},
          {"train_dir", train_dir},   {"test_dir", test_dir},           {"target_resolution", {target.width, target.height}}};
}

bool glob_match(std::string_view pattern, std::string_view name) {
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

Image preprocess(const Image& image, Resolution target) {
  if (image.width < 1 || image.height < 1) throw ValidationError("preprocess: empty image");
  const long long w = image.width, h = image.height;
  const long long g = std::gcd(target.width, target.height);
  const long long uw = target.width / g, uh = target.height / g;
  const long long k = std::min(w / uw, h / uh);
  long long cw = k * uw, ch = k * uh;
  if (k == 0) {
    // Smaller than one aspect unit: keep the short side whole.
    cw = w * target.height > h * target.width ? std::max(1LL, h * target.width / target.height) : w;
    ch = w * target.height > h * target.width ? h : std::max(1LL, w * target.height / target.width);
  }
  const Image rgb = to_rgb(image);
  const Image cropped = crop(rgb, static_cast<int>((w - cw) / 2), static_cast<int>((h - ch) / 2),
                             static_cast<int>(cw), static_cast<int>(ch));
  return resize_bilinear(cropped, target.width, target.height);
}

namespace {

struct Pending {
  std::filesystem::path image;
  std::filesystem::path mask;
  Split split;
  std::string id;
};

void collect(const std::filesystem::path& dir, Split split, const LayoutSpec& layout, std::vector<Pending>& out) {
  if (!std::filesystem::is_directory(dir)) throw IngestError("missing split directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const std::string name = file.filename().string();
    if (!glob_match(layout.image_glob, name)) continue;
    const std::string stem = file.stem().string();
    if (!layout.mask_suffix.empty() && stem.size() >= layout.mask_suffix.size() &&
        stem.compare(stem.size() - layout.mask_suffix.size(), layout.mask_suffix.size(), layout.mask_suffix) == 0) {
      continue;
    }
    Pending p;
    p.image = file;
    p.mask = file.parent_path() / (stem + layout.mask_suffix + file.extension().string());
    p.split = split;
    p.id = std::string(to_string(split)) + "_" + stem;
    out.push_back(std::move(p));
  }
}

}  // namespace

DatasetManifest load_dataset(const std::filesystem::path& root, const LayoutSpec& layout) {
  if (!std::filesystem::is_directory(root)) throw IngestError("dataset root is not a directory: " + root.string());
  std::vector<Pending> pending;
  if (layout.split_rule == "directory") {
    collect(root / layout.train_dir, Split::train, layout, pending);
    collect(root / layout.test_dir, Split::test, layout, pending);
  } else {
    collect(root, parse_split(layout.split_rule), layout, pending);
  }
  if (pending.empty()) throw IngestError("no images matching '" + layout.image_glob + "' under " + root.string());

  std::vector<Sample> samples;
  samples.reserve(pending.size());
  for (const Pending& p : pending) {
    if (!std::filesystem::exists(p.mask)) throw IngestError("missing annotation mask: " + p.mask.string());
    const Image image = read_png(p.image);
    const Image mask = read_png(p.mask);
    if (mask.width != image.width || mask.height != image.height) {
      throw IngestError("mask/image shape mismatch: " + p.mask.string());
    }
    const bool defective = std::any_of(mask.pixels.begin(), mask.pixels.end(), [](float v) { return v != 0.0f; });
    samples.push_back(make_sample(p.id, preprocess(image, layout.target),
                                  defective ? Label::positive : Label::negative, Source::original, p.split,
                                  std::filesystem::relative(p.image, root).generic_string()));
  }
  return DatasetManifest(std::move(samples), layout.target, {{"layout", layout.to_json()}});
}

}  // namespace inout
