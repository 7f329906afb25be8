#include "fhsst/tensor.hpp"

namespace fhsst {

std::string to_string(const Dims3& d) {
  return "(" + std::to_string(d.t) + "," + std::to_string(d.h) + "," + std::to_string(d.w) + ")";
}

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.t) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + "," +
         std::to_string(s.c) + ")";
}

}  // namespace fhsst
