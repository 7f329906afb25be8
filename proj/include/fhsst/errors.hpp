#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fhsst {

enum class Errc {
  NonExactGrid,
  ShapeMismatch,
  InvalidConfig,
  NonFinite,
  DegenerateEmbedding,
  InvalidTarget,
  InsufficientSubjects,
  InsufficientSamples,
  CorruptCheckpoint,
  MissingEmbedding,
  EmptyScores,
  UnreachableOperatingPoint,
  EmptyDataset,
  MalformedLayout,
  IoFailure,
};

std::string_view to_string(Errc code);

/// True for errors caused by bad inputs or configuration rather than by a
/// failure while running (the CLI maps these to exit code 1).
bool is_validation_error(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

}  // namespace fhsst
