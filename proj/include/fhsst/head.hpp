#pragma once

#include "fhsst/params.hpp"
#include "fhsst/tensor.hpp"

#include <json.hpp>

namespace fhsst {

/// Two fully connected layers (rectifier after the first, none after the
/// second) followed by L2 normalization.
struct HeadConfig {
  int input_dim = 1024;
  int fc1_units = 1024;
  int fc2_units = 512;
};

nlohmann::json to_json(const HeadConfig& cfg);
HeadConfig head_from_json(const nlohmann::json& j);
long long count_params(const HeadConfig& cfg);

template <typename Scalar>
struct HeadTape {
  Vector<Scalar> input;
  Vector<Scalar> hidden;  // after the rectifier
  Vector<Scalar> pre_norm;
  Scalar norm = 0;
};

/// Normalizes to unit L2 norm; throws DegenerateEmbedding on a zero vector.
template <typename Scalar>
Vector<Scalar> l2_normalize(const Vector<Scalar>& v);

/// Jacobian-vector product of v -> v / |v| at v, applied to `grad`.
template <typename Scalar>
Vector<Scalar> l2_normalize_backward(const Vector<Scalar>& v, const Vector<Scalar>& grad);

template <typename Scalar>
class Head {
 public:
  explicit Head(HeadConfig cfg);

  const HeadConfig& config() const { return cfg_; }

  /// Parameters: fc1/w (in x fc1), fc1/b, fc2/w (fc1 x fc2), fc2/b.
  ParamSet<Scalar> init_params(std::uint64_t seed) const;

  Vector<Scalar> forward(const Vector<Scalar>& e, const ParamSet<Scalar>& params,
                         HeadTape<Scalar>* tape = nullptr) const;

  /// Accumulates parameter gradients; returns d(loss)/d(input).
  Vector<Scalar> backward(const HeadTape<Scalar>& tape, const Vector<Scalar>& d_out,
                          const ParamSet<Scalar>& params, ParamSet<Scalar>& grads) const;

 private:
  HeadConfig cfg_;
};

}  // namespace fhsst
