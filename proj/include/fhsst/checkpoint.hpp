#pragma once

#include "fhsst/params.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace fhsst {

/// Checkpoint container (little-endian):
///
///   char[8]  magic "FHSSTCK1"
///   uint32   metadata length, then UTF-8 JSON metadata
///   uint32   tensor count, then per tensor:
///              uint32 name length, name bytes,
///              uint32 dtype tag (1 = float32),
///              uint64 rows, uint64 cols, column-major payload
///   uint64   FNV-1a hash of every preceding byte
///
/// Metadata always carries "config_hash", "preset", "stage" and "epoch".
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  ParamSet<float> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws CorruptCheckpoint on a bad magic, truncation, hash mismatch, or a
/// config hash different from `expected_config_hash` (when given).
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_config_hash = std::nullopt);

/// Copies tensors named `prefix + name` into a new set with the prefix removed.
ParamSet<float> extract_group(const Checkpoint& ckpt, const std::string& prefix);
void append_group(Checkpoint& ckpt, const std::string& prefix, const ParamSet<float>& group);

}  // namespace fhsst
