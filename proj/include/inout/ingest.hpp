#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "inout/image.hpp"
#include "inout/manifest.hpp"

namespace inout {

inline constexpr Resolution kDefaultResolution{200, 600};

// Declarative description of a dataset tree on disk.
//   image_glob   filename pattern for images ('*' and '?' wildcards)
//   mask_suffix  mask file = <image stem><mask_suffix><image extension>
//   split_rule   "directory": <root>/<train_dir>, <root>/<test_dir>;
//                "train" / "test": flat root, every image in that split
struct LayoutSpec {
  std::string image_glob = "*.png";
  std::string mask_suffix = "_GT";
  std::string split_rule = "directory";
  std::string train_dir = "train";
  std::string test_dir = "test";
  Resolution target = kDefaultResolution;

  static LayoutSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

bool glob_match(std::string_view pattern, std::string_view name);

// Largest centred crop with the target aspect, then bilinear resize; output is RGB.
Image preprocess(const Image& image, Resolution target = kDefaultResolution);

// Ingests every image under root. A sample is positive iff its mask has any
// nonzero pixel. Samples are ordered by split, then by file path.
DatasetManifest load_dataset(const std::filesystem::path& root, const LayoutSpec& layout);

}  // namespace inout
