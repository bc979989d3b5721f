#include "inout/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "inout/errors.hpp"

namespace inout {

static_assert(std::endian::native == std::endian::little, "archive IO assumes a little-endian host");

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::json header = nlohmann::json::object();
  header["__metadata__"] = archive.metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : archive.tensors) {
    const std::uint64_t bytes = tensor.data.size() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", tensor.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  // Pad so the payload starts 8-byte aligned.
  text.append((8 - text.size() % 8) % 8, ' ');
  const std::uint64_t header_len = text.size();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write archive: " + path.string());
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, tensor] : archive.tensors) {
      out.write(reinterpret_cast<const char*>(tensor.data.data()),
                static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
    }
    if (!out) throw Error("short write on archive: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open archive: " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < sizeof(std::uint64_t)) throw LoadError("archive truncated before header: " + path.string());
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, blob.data(), sizeof(header_len));
  if (header_len > blob.size() - sizeof(header_len)) throw LoadError("archive header truncated: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(sizeof(header_len), header_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("archive header is not valid JSON (" + std::string(e.what()) + "): " + path.string());
  }
  if (!header.is_object()) throw LoadError("archive header must be an object: " + path.string());

  const std::string_view payload(blob.data() + sizeof(header_len) + header_len,
                                 blob.size() - sizeof(header_len) - header_len);
  TensorArchive archive;
  std::uint64_t expected_end = 0;
  try {
    for (const auto& [name, entry] : header.items()) {
      if (name == "__metadata__") {
        archive.metadata = entry;
        continue;
      }
      if (entry.at("dtype").get<std::string>() != "F32") {
        throw LoadError("unsupported dtype for tensor '" + name + "'");
      }
      NamedTensor tensor;
      tensor.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > payload.size()) {
        throw LoadError("tensor '" + name + "' lies outside the payload (truncated file?)");
      }
      const std::int64_t count =
          std::accumulate(tensor.shape.begin(), tensor.shape.end(), std::int64_t{1}, std::multiplies<>());
      if (count < 0 || static_cast<std::uint64_t>(count) * sizeof(float) != offsets[1] - offsets[0]) {
        throw LoadError("tensor '" + name + "' shape does not match its byte range");
      }
      tensor.data.resize(static_cast<std::size_t>(count));
      std::memcpy(tensor.data.data(), payload.data() + offsets[0], offsets[1] - offsets[0]);
      expected_end = std::max(expected_end, offsets[1]);
      archive.tensors.emplace(name, std::move(tensor));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed archive header: " + std::string(e.what()));
  }
  if (expected_end != payload.size()) throw LoadError("archive payload size mismatch: " + path.string());
  return archive;
}

}  // namespace inout
