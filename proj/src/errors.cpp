#include "fhsst/errors.hpp"

namespace fhsst {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::NonExactGrid: return "NonExactGrid";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NonFinite: return "NonFinite";
    case Errc::DegenerateEmbedding: return "DegenerateEmbedding";
    case Errc::InvalidTarget: return "InvalidTarget";
    case Errc::InsufficientSubjects: return "InsufficientSubjects";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::MissingEmbedding: return "MissingEmbedding";
    case Errc::EmptyScores: return "EmptyScores";
    case Errc::UnreachableOperatingPoint: return "UnreachableOperatingPoint";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::MalformedLayout: return "MalformedLayout";
    case Errc::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

bool is_validation_error(Errc code) {
  switch (code) {
    case Errc::NonFinite:
    case Errc::IoFailure:
    case Errc::CorruptCheckpoint:
      return false;
    default:
      return true;
  }
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace fhsst
