#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace fhsst {

/// Incremental 64-bit FNV-1a. Used for checkpoint integrity, config hashes and
/// content-addressed skipping of finished artifacts; not cryptographic.
class Fnv1a64 {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  template <typename T>
  void update_pod(const T& value) {
    update(std::as_bytes(std::span<const T, 1>(&value, 1)));
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_hex(std::string_view text);
std::string hash_file_hex(const std::filesystem::path& path);

}  // namespace fhsst
