#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace inout {

// Incremental SHA-256; hex() finalizes.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> bytes);
  Sha256& update(std::string_view text);
  std::string hex();

 private:
  void* ctx_;
  bool finalized_ = false;
};

std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const std::byte> bytes);

}  // namespace inout
