#pragma once

#include "fhsst/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fhsst {

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
};

/// Ordered collection of named parameter arrays. The order is fixed by the
/// network that created it and is the order used by checkpoints and the
/// optimizer.
template <typename Scalar>
struct ParamSet {
  std::vector<Parameter<Scalar>> tensors;

  std::size_t size() const { return tensors.size(); }
  Matrix<Scalar>& operator[](std::size_t i) { return tensors[i].value; }
  const Matrix<Scalar>& operator[](std::size_t i) const { return tensors[i].value; }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].name == name) return static_cast<int>(i);
    return -1;
  }

  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : tensors) n += p.value.size();
    return n;
  }
};

template <typename Scalar>
ParamSet<Scalar> zeros_like(const ParamSet<Scalar>& p) {
  ParamSet<Scalar> out;
  out.tensors.reserve(p.size());
  for (const auto& t : p.tensors) out.tensors.push_back({t.name, Matrix<Scalar>::Zero(t.value.rows(), t.value.cols())});
  return out;
}

template <typename Scalar>
void set_zero(ParamSet<Scalar>& p) {
  for (auto& t : p.tensors) t.value.setZero();
}

/// a += b, tensor by tensor (shapes must agree).
template <typename Scalar>
void accumulate(ParamSet<Scalar>& a, const ParamSet<Scalar>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename To, typename From>
ParamSet<To> cast_params(const ParamSet<From>& p) {
  ParamSet<To> out;
  for (const auto& t : p.tensors) out.tensors.push_back({t.name, t.value.template cast<To>()});
  return out;
}

template <typename Scalar>
bool all_finite(const ParamSet<Scalar>& p) {
  for (const auto& t : p.tensors)
    if (!t.value.allFinite()) return false;
  return true;
}

/// Hash over names, shapes and raw bytes of every tensor.
template <typename Scalar>
std::string params_hash(const ParamSet<Scalar>& p);

/// Glorot/Xavier uniform: U(-l, l), l = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
void glorot_uniform(Matrix<Scalar>& w, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(dist(rng));
}

}  // namespace fhsst
