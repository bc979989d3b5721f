#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace inout {

struct NamedTensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Safetensors-compatible layout: u64 little-endian header length, a JSON header
// mapping tensor name -> {dtype, shape, data_offsets} plus a "__metadata__"
// object, then the packed F32 payload.
struct TensorArchive {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, NamedTensor> tensors;
};

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
// Throws LoadError on any truncation, bad header or out-of-range offset.
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace inout
