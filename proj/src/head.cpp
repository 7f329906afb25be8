#include "fhsst/head.hpp"

#include "fhsst/errors.hpp"

#include <random>

namespace fhsst {

nlohmann::json to_json(const HeadConfig& cfg) {
  return {{"input_dim", cfg.input_dim}, {"fc1_units", cfg.fc1_units}, {"fc2_units", cfg.fc2_units}};
}

HeadConfig head_from_json(const nlohmann::json& j) {
  HeadConfig cfg;
  cfg.input_dim = j.value("input_dim", cfg.input_dim);
  cfg.fc1_units = j.value("fc1_units", cfg.fc1_units);
  cfg.fc2_units = j.value("fc2_units", cfg.fc2_units);
  return cfg;
}

long long count_params(const HeadConfig& cfg) {
  return 1LL * cfg.input_dim * cfg.fc1_units + cfg.fc1_units + 1LL * cfg.fc1_units * cfg.fc2_units + cfg.fc2_units;
}

template <typename Scalar>
Vector<Scalar> l2_normalize(const Vector<Scalar>& v) {
  const Scalar n = v.norm();
  if (!(n > Scalar(0))) fail(Errc::DegenerateEmbedding, "cannot normalize a zero-norm vector");
  return v / n;
}

template <typename Scalar>
Vector<Scalar> l2_normalize_backward(const Vector<Scalar>& v, const Vector<Scalar>& grad) {
  const Scalar n = v.norm();
  const Vector<Scalar> u = v / n;
  return (grad - u * u.dot(grad)) / n;
}

template <typename Scalar>
Head<Scalar>::Head(HeadConfig cfg) : cfg_(cfg) {
  if (cfg_.input_dim < 1 || cfg_.fc1_units < 1 || cfg_.fc2_units < 1)
    fail(Errc::InvalidConfig, "head dimensions must be positive");
}

template <typename Scalar>
ParamSet<Scalar> Head<Scalar>::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParamSet<Scalar> p;
  Matrix<Scalar> w1(cfg_.input_dim, cfg_.fc1_units);
  glorot_uniform(w1, cfg_.input_dim, cfg_.fc1_units, rng);
  Matrix<Scalar> w2(cfg_.fc1_units, cfg_.fc2_units);
  glorot_uniform(w2, cfg_.fc1_units, cfg_.fc2_units, rng);
  p.tensors.push_back({"fc1/w", std::move(w1)});
  p.tensors.push_back({"fc1/b", Matrix<Scalar>::Zero(cfg_.fc1_units, 1)});
  p.tensors.push_back({"fc2/w", std::move(w2)});
  p.tensors.push_back({"fc2/b", Matrix<Scalar>::Zero(cfg_.fc2_units, 1)});
  return p;
}

template <typename Scalar>
Vector<Scalar> Head<Scalar>::forward(const Vector<Scalar>& e, const ParamSet<Scalar>& params,
                                     HeadTape<Scalar>* tape) const {
  if (e.size() != cfg_.input_dim)
    fail(Errc::ShapeMismatch, "head input length " + std::to_string(e.size()) + ", expected " +
                                  std::to_string(cfg_.input_dim));
  if (params.size() != 4) fail(Errc::ShapeMismatch, "head expects 4 parameter tensors");
  Vector<Scalar> hidden = (params[0].transpose() * e + params[1].col(0)).cwiseMax(Scalar(0));
  Vector<Scalar> z = params[2].transpose() * hidden + params[3].col(0);
  Vector<Scalar> out = l2_normalize(z);
  if (tape) {
    tape->input = e;
    tape->hidden = std::move(hidden);
    tape->norm = z.norm();
    tape->pre_norm = std::move(z);
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> Head<Scalar>::backward(const HeadTape<Scalar>& tape, const Vector<Scalar>& d_out,
                                      const ParamSet<Scalar>& params, ParamSet<Scalar>& grads) const {
  const Vector<Scalar> dz = l2_normalize_backward(tape.pre_norm, d_out);
  grads[2].noalias() += tape.hidden * dz.transpose();
  grads[3].col(0) += dz;
  Vector<Scalar> dh = params[2] * dz;
  dh = (tape.hidden.array() > Scalar(0)).select(dh, Scalar(0));
  grads[0].noalias() += tape.input * dh.transpose();
  grads[1].col(0) += dh;
  return params[0] * dh;
}

template Vector<float> l2_normalize<float>(const Vector<float>&);
template Vector<double> l2_normalize<double>(const Vector<double>&);
template Vector<float> l2_normalize_backward<float>(const Vector<float>&, const Vector<float>&);
template Vector<double> l2_normalize_backward<double>(const Vector<double>&, const Vector<double>&);
template class Head<float>;
template class Head<double>;

}  // namespace fhsst
