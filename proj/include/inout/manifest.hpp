#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "inout/image.hpp"

namespace inout {

enum class Label { negative, positive };
enum class Source { original, diffusion, region };
enum class Split { train, test };

std::string_view to_string(Label label);
std::string_view to_string(Source source);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);
Source parse_source(std::string_view text);
Split parse_split(std::string_view text);

// One catalogued image. `pixels` may be absent for a manifest read from disk
// without its images; `digest` always identifies the pixel content.
struct Sample {
  std::string id;
  std::string path;
  Label label = Label::negative;
  Source source = Source::original;
  Split split = Split::train;
  std::string digest;
  std::shared_ptr<const Image> pixels;

  const Image& image() const;
};

// Builds a sample around in-memory pixels, filling in the digest.
Sample make_sample(std::string id, Image pixels, Label label, Source source, Split split, std::string path = {});

struct SplitCounts {
  std::size_t negative = 0;
  std::size_t positive = 0;
  std::size_t total() const { return negative + positive; }
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

// Immutable sample catalogue. Construction rejects duplicate ids and derives
// the per-split tallies and the content hash from the ordered sample list.
class DatasetManifest {
 public:
  DatasetManifest() : DatasetManifest({}, {0, 0}) {}
  DatasetManifest(std::vector<Sample> samples, Resolution target_resolution,
                  nlohmann::json metadata = nlohmann::json::object());

  const std::vector<Sample>& samples() const { return samples_; }
  Resolution target_resolution() const { return target_; }
  const nlohmann::json& metadata() const { return metadata_; }
  const std::string& content_hash() const { return hash_; }
  const SplitCounts& counts(Split split) const { return split == Split::train ? train_ : test_; }
  std::size_t size() const { return samples_.size(); }

  std::vector<Sample> select(Split split) const;
  std::vector<Sample> select(Split split, Label label) const;
  const Sample* find(std::string_view id) const;
  bool has_pixels() const;

 private:
  std::vector<Sample> samples_;
  Resolution target_;
  nlohmann::json metadata_;
  SplitCounts train_;
  SplitCounts test_;
  std::string hash_;
};

// Line-delimited records: a header line (resolution, counts, content hash,
// metadata) followed by one JSON object per sample.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Writes every sample as <dir>/images/<id>.png plus <dir>/manifest.jsonl.
// Pixels are quantised to 8 bits before hashing so a reload reproduces the
// written content hash exactly. Returns the manifest as persisted.
DatasetManifest save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest);
// Reads manifest.jsonl and attaches pixels; digests are verified.
DatasetManifest load_dataset_dir(const std::filesystem::path& dir);

Image quantize8(const Image& image);

}  // namespace inout
