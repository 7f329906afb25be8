#include "fhsst/losses.hpp"

#include "fhsst/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fhsst {

template <typename Scalar>
Scalar cosine_similarity(const Vector<Scalar>& a, const Vector<Scalar>& b) {
  if (a.size() != b.size()) fail(Errc::ShapeMismatch, "cosine of vectors with different lengths");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(0)) || !(nb > Scalar(0))) fail(Errc::DegenerateEmbedding, "zero-norm embedding");
  const Scalar c = a.dot(b) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
Scalar cosine_distance(const Vector<Scalar>& a, const Vector<Scalar>& b) {
  return Scalar(1) - cosine_similarity(a, b);
}

template <typename Scalar>
Scalar cosine_distance_grad(const Vector<Scalar>& a, const Vector<Scalar>& b, Vector<Scalar>& grad_a,
                            Vector<Scalar>& grad_b) {
  if (a.size() != b.size()) fail(Errc::ShapeMismatch, "cosine of vectors with different lengths");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(0)) || !(nb > Scalar(0))) fail(Errc::DegenerateEmbedding, "zero-norm embedding");
  const Scalar c = a.dot(b) / (na * nb);
  grad_a = -(b / (na * nb) - a * (c / (na * na)));
  grad_b = -(a / (na * nb) - b * (c / (nb * nb)));
  return Scalar(1) - c;
}

std::string to_string(MiningPolicy p) {
  return p == MiningPolicy::BatchAllValid ? "batch-all-valid" : "batch-hard";
}

MiningPolicy mining_policy_from(const std::string& s) {
  if (s == "batch-all-valid") return MiningPolicy::BatchAllValid;
  if (s == "batch-hard") return MiningPolicy::BatchHard;
  fail(Errc::InvalidConfig, "unknown mining policy '" + s + "'");
}

void TripletConfig::validate() const {
  if (!(margin > 0.0) || margin > margin_max)
    fail(Errc::InvalidConfig, "triplet margin must satisfy 0 < margin <= margin_max");
  if (simultaneous_triplets < 1) fail(Errc::InvalidConfig, "simultaneous_triplets must be >= 1");
}

void ArcConfig::validate() const {
  if (margin < 0.0 || margin >= std::numbers::pi / 2) fail(Errc::InvalidConfig, "arcface margin must be in [0, pi/2)");
  if (!(scale > 0.0)) fail(Errc::InvalidConfig, "arcface scale must be positive");
}

template <typename Scalar>
std::vector<Triplet> mine_triplets(const RowMatrix<Scalar>& embeddings, std::span<const int> labels,
                                   const TripletConfig& cfg) {
  const auto n = static_cast<int>(labels.size());
  if (embeddings.rows() != n) fail(Errc::ShapeMismatch, "one label per embedding row required");
  std::vector<Triplet> out;
  if (n < 3) return out;

  // Pairwise cosine distances from the Gram matrix of row-normalized embeddings.
  const Vector<Scalar> norms = embeddings.rowwise().norm();
  if ((norms.array() <= Scalar(0)).any()) fail(Errc::DegenerateEmbedding, "zero-norm embedding in batch");
  const RowMatrix<Scalar> unit = norms.cwiseInverse().asDiagonal() * embeddings;
  const Matrix<Scalar> dist = (Matrix<Scalar>::Ones(n, n) - unit * unit.transpose()).eval();

  const double m = cfg.margin;
  for (int a = 0; a < n; ++a) {
    if (cfg.mining == MiningPolicy::BatchAllValid) {
      for (int p = 0; p < n; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        const double d_ap = dist(a, p);
        for (int q = 0; q < n; ++q) {
          if (labels[q] == labels[a]) continue;
          if (triplet_loss(d_ap, dist(a, q), m) > 0.0) out.push_back({a, p, q});
        }
      }
    } else {
      int hardest_pos = -1;
      int hardest_neg = -1;
      for (int j = 0; j < n; ++j) {
        if (j == a) continue;
        if (labels[j] == labels[a]) {
          if (hardest_pos < 0 || dist(a, j) > dist(a, hardest_pos)) hardest_pos = j;
        } else if (hardest_neg < 0 || dist(a, j) < dist(a, hardest_neg)) {
          hardest_neg = j;
        }
      }
      if (hardest_pos >= 0 && hardest_neg >= 0 && triplet_loss(dist(a, hardest_pos), dist(a, hardest_neg), m) > 0.0)
        out.push_back({a, hardest_pos, hardest_neg});
    }
  }
  return out;
}

template <typename Scalar>
TripletBatchLoss<Scalar> triplet_batch_loss(const RowMatrix<Scalar>& embeddings, std::span<const Triplet> triplets,
                                            double margin, int micro_batch) {
  if (micro_batch < 1) fail(Errc::InvalidConfig, "micro_batch must be >= 1");
  TripletBatchLoss<Scalar> result;
  result.grad = RowMatrix<Scalar>::Zero(embeddings.rows(), embeddings.cols());
  if (triplets.empty()) return result;

  const std::size_t groups = (triplets.size() + micro_batch - 1) / micro_batch;
  Vector<Scalar> ga, gp, gn_a, gn_n;
  double total = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t begin = g * micro_batch;
    const std::size_t end = std::min(triplets.size(), begin + micro_batch);
    const Scalar weight = Scalar(1) / Scalar((end - begin) * groups);
    for (std::size_t i = begin; i < end; ++i) {
      const Triplet& t = triplets[i];
      const Vector<Scalar> a = embeddings.row(t.anchor).transpose();
      const Vector<Scalar> p = embeddings.row(t.positive).transpose();
      const Vector<Scalar> q = embeddings.row(t.negative).transpose();
      const Scalar d_ap = cosine_distance_grad(a, p, ga, gp);
      const Scalar d_an = cosine_distance_grad(a, q, gn_a, gn_n);
      const double loss = triplet_loss(d_ap, d_an, margin);
      total += loss * weight;
      if (loss <= 0.0) continue;
      result.grad.row(t.anchor) += weight * (ga - gn_a).transpose();
      result.grad.row(t.positive) += weight * gp.transpose();
      result.grad.row(t.negative) -= weight * gn_n.transpose();
    }
  }
  result.loss = static_cast<Scalar>(total);
  return result;
}

template <typename Scalar>
Matrix<Scalar> normalize_columns(const Matrix<Scalar>& w) {
  const Vector<Scalar> norms = w.colwise().norm().transpose();
  if ((norms.array() <= Scalar(0)).any()) fail(Errc::DegenerateEmbedding, "zero-norm class weight");
  return w * norms.cwiseInverse().asDiagonal();
}

namespace {

template <typename Scalar>
struct MarginTerm {
  Scalar value;
  Scalar slope;  // d value / d cos
};

// cos(theta + m) expressed in cos(theta), with the linear fallback past pi - m.
template <typename Scalar>
MarginTerm<Scalar> margin_term(Scalar cos_t, double m) {
  const bool clamped = cos_t < Scalar(-1) || cos_t > Scalar(1);
  const Scalar c = std::clamp(cos_t, Scalar(-1), Scalar(1));
  const Scalar cos_m = static_cast<Scalar>(std::cos(m));
  const Scalar sin_m = static_cast<Scalar>(std::sin(m));
  const Scalar threshold = static_cast<Scalar>(std::cos(std::numbers::pi - m));
  MarginTerm<Scalar> out;
  if (c > threshold) {
    const Scalar sin_t = std::sqrt(std::max(Scalar(0), Scalar(1) - c * c));
    out.value = c * cos_m - sin_t * sin_m;
    out.slope = cos_m + sin_m * c / std::max(sin_t, Scalar(kArcSinFloor));
  } else {
    out.value = c - static_cast<Scalar>(m) * sin_m;
    out.slope = Scalar(1);
  }
  if (clamped) out.slope = Scalar(0);
  return out;
}

template <typename Scalar>
void check_classifier_args(const Vector<Scalar>& e, const Matrix<Scalar>& weight, int target) {
  if (weight.rows() != e.size())
    fail(Errc::ShapeMismatch, "class weights have " + std::to_string(weight.rows()) + " rows, embedding has " +
                                  std::to_string(e.size()));
  if (target < 0 || target >= weight.cols())
    fail(Errc::InvalidTarget, "target " + std::to_string(target) + " outside [0, " + std::to_string(weight.cols()) + ")");
}

}  // namespace

template <typename Scalar>
Vector<Scalar> cosine_logits(const Vector<Scalar>& e, const Matrix<Scalar>& weight, Scalar scale) {
  if (weight.rows() != e.size()) fail(Errc::ShapeMismatch, "class weight rows must match embedding length");
  return scale * (weight.transpose() * e);
}

template <typename Scalar>
Vector<Scalar> arcface_logits(const Vector<Scalar>& e, const Matrix<Scalar>& weight, int target,
                              const ArcConfig& cfg) {
  check_classifier_args(e, weight, target);
  const Scalar s = static_cast<Scalar>(cfg.scale);
  Vector<Scalar> cos = weight.transpose() * e;
  Vector<Scalar> logits = s * cos;
  logits(target) = s * margin_term(cos(target), cfg.margin).value;
  return logits;
}

template <typename Scalar>
Scalar softmax_cross_entropy(const Vector<Scalar>& logits, int target, Vector<Scalar>* grad) {
  if (target < 0 || target >= logits.size()) fail(Errc::InvalidTarget, "target outside logit range");
  const Scalar mx = logits.maxCoeff();
  const Vector<Scalar> ex = (logits.array() - mx).exp().matrix();
  const Scalar others = ex.sum() - ex(target);
  // log(sum) - (l_t - max); log1p keeps precision when the target dominates.
  Scalar loss;
  if (logits(target) == mx) {
    Scalar rest = 0;
    for (Eigen::Index j = 0; j < logits.size(); ++j)
      if (j != target) rest += ex(j);
    loss = std::log1p(rest);
  } else {
    loss = std::log(ex(target) + others) - (logits(target) - mx);
  }
  if (grad) {
    *grad = ex / ex.sum();
    (*grad)(target) -= Scalar(1);
  }
  return loss;
}

template <typename Scalar>
Scalar classifier_loss(const Vector<Scalar>& e, const Matrix<Scalar>& raw_weight, int target, const ArcConfig& cfg,
                       ClassifierLoss kind, Vector<Scalar>* grad_e, Matrix<Scalar>* grad_weight) {
  check_classifier_args(e, raw_weight, target);
  const Vector<Scalar> col_norms = raw_weight.colwise().norm().transpose();
  if ((col_norms.array() <= Scalar(0)).any()) fail(Errc::DegenerateEmbedding, "zero-norm class weight");
  const Matrix<Scalar> unit = raw_weight * col_norms.cwiseInverse().asDiagonal();
  const Scalar s = static_cast<Scalar>(cfg.scale);

  const Vector<Scalar> cos = unit.transpose() * e;
  Vector<Scalar> logits = s * cos;
  Scalar target_slope = Scalar(1);
  if (kind == ClassifierLoss::ArcFace) {
    const auto term = margin_term(cos(target), cfg.margin);
    logits(target) = s * term.value;
    target_slope = term.slope;
  }
  Vector<Scalar> d_logits;
  const Scalar loss = softmax_cross_entropy(logits, target, (grad_e || grad_weight) ? &d_logits : nullptr);
  if (!grad_e && !grad_weight) return loss;

  Vector<Scalar> d_cos = s * d_logits;
  d_cos(target) *= target_slope;
  if (grad_e) {
    if (grad_e->size() != e.size()) *grad_e = Vector<Scalar>::Zero(e.size());
    *grad_e += unit * d_cos;
  }
  if (grad_weight) {
    if (grad_weight->rows() != raw_weight.rows() || grad_weight->cols() != raw_weight.cols())
      *grad_weight = Matrix<Scalar>::Zero(raw_weight.rows(), raw_weight.cols());
    for (Eigen::Index j = 0; j < raw_weight.cols(); ++j) {
      if (d_cos(j) == Scalar(0)) continue;
      // d cos_j / d w_j = (e - cos_j * u_j) / |w_j|
      grad_weight->col(j) += d_cos(j) * (e - cos(j) * unit.col(j)) / col_norms(j);
    }
  }
  return loss;
}

#define FHSST_INSTANTIATE_LOSSES(S)                                                                       \
  template S cosine_similarity<S>(const Vector<S>&, const Vector<S>&);                                     \
  template S cosine_distance<S>(const Vector<S>&, const Vector<S>&);                                       \
  template S cosine_distance_grad<S>(const Vector<S>&, const Vector<S>&, Vector<S>&, Vector<S>&);          \
  template std::vector<Triplet> mine_triplets<S>(const RowMatrix<S>&, std::span<const int>,               \
                                                 const TripletConfig&);                                    \
  template TripletBatchLoss<S> triplet_batch_loss<S>(const RowMatrix<S>&, std::span<const Triplet>, double, \
                                                     int);                                                 \
  template Matrix<S> normalize_columns<S>(const Matrix<S>&);                                               \
  template Vector<S> cosine_logits<S>(const Vector<S>&, const Matrix<S>&, S);                              \
  template Vector<S> arcface_logits<S>(const Vector<S>&, const Matrix<S>&, int, const ArcConfig&);         \
  template S softmax_cross_entropy<S>(const Vector<S>&, int, Vector<S>*);                                  \
  template S classifier_loss<S>(const Vector<S>&, const Matrix<S>&, int, const ArcConfig&, ClassifierLoss, \
                                Vector<S>*, Matrix<S>*);

FHSST_INSTANTIATE_LOSSES(float)
FHSST_INSTANTIATE_LOSSES(double)

}  // namespace fhsst
