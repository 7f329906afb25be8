#pragma once

#include "fhsst/tensor.hpp"

#include <compare>
#include <span>
#include <string>
#include <vector>

namespace fhsst {

// ---------------------------------------------------------------------------
// Similarity

/// (a . b) / (|a| |b|). Throws DegenerateEmbedding on a zero-norm input.
template <typename Scalar>
Scalar cosine_similarity(const Vector<Scalar>& a, const Vector<Scalar>& b);

/// 1 - cosine_similarity(a, b), in [0, 2].
template <typename Scalar>
Scalar cosine_distance(const Vector<Scalar>& a, const Vector<Scalar>& b);

/// Cosine distance with its gradients with respect to both arguments.
template <typename Scalar>
Scalar cosine_distance_grad(const Vector<Scalar>& a, const Vector<Scalar>& b, Vector<Scalar>& grad_a,
                            Vector<Scalar>& grad_b);

// ---------------------------------------------------------------------------
// Triplet objective

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

enum class MiningPolicy { BatchAllValid, BatchHard };

std::string to_string(MiningPolicy p);
MiningPolicy mining_policy_from(const std::string& s);

struct TripletConfig {
  double margin = 0.5;
  double margin_max = 1.5;
  MiningPolicy mining = MiningPolicy::BatchAllValid;
  int simultaneous_triplets = 2;

  void validate() const;
};

/// max(0, d_ap - d_an + margin).
inline double triplet_loss(double d_ap, double d_an, double margin) {
  const double v = d_ap - d_an + margin;
  return v > 0.0 ? v : 0.0;
}

/// Online mining over a labelled batch (one embedding per row).
///
/// BatchAllValid returns every (anchor, positive, negative) with a positive
/// hinge; BatchHard pairs each anchor with its farthest positive and nearest
/// negative and keeps the triplet if its hinge is positive. Output is sorted
/// by (anchor, positive, negative). A batch without two classes or without a
/// repeated class yields an empty list.
template <typename Scalar>
std::vector<Triplet> mine_triplets(const RowMatrix<Scalar>& embeddings, std::span<const int> labels,
                                   const TripletConfig& cfg);

template <typename Scalar>
struct TripletBatchLoss {
  Scalar loss = 0;
  RowMatrix<Scalar> grad;  // d(loss)/d(embeddings), same shape as the batch
};

/// Mean over micro-batches of `micro_batch` consecutive triplets of the mean
/// triplet loss inside each micro-batch. Zero loss and gradient when
/// `triplets` is empty.
template <typename Scalar>
TripletBatchLoss<Scalar> triplet_batch_loss(const RowMatrix<Scalar>& embeddings, std::span<const Triplet> triplets,
                                            double margin, int micro_batch);

// ---------------------------------------------------------------------------
// Additive angular margin

struct ArcConfig {
  double margin = 0.5;  // radians
  double scale = 30.0;
  int num_classes = 0;

  void validate() const;
};

/// Lower bound on sin(theta) in the slope of the margin term; the slope of
/// cos(acos(c) + m) is unbounded as c -> 1.
inline constexpr double kArcSinFloor = 1e-7;

/// Logits for one embedding against unit-norm class columns `weight`
/// (dim x classes): s*cos(theta_j) for non-targets and s*cos(theta_t + m)
/// for the target, falling back to s*(cos(theta_t) - m*sin(m)) once
/// theta_t + m reaches pi.
template <typename Scalar>
Vector<Scalar> arcface_logits(const Vector<Scalar>& e, const Matrix<Scalar>& weight, int target,
                              const ArcConfig& cfg);

/// -log softmax(logits)[target] with max subtraction. When `grad` is given it
/// receives softmax(logits) - onehot(target).
template <typename Scalar>
Scalar softmax_cross_entropy(const Vector<Scalar>& logits, int target, Vector<Scalar>* grad = nullptr);

/// Margin-free cosine classifier: every logit is s*cos(theta_j).
template <typename Scalar>
Vector<Scalar> cosine_logits(const Vector<Scalar>& e, const Matrix<Scalar>& weight, Scalar scale);

enum class ClassifierLoss { ArcFace, CosineSoftmax };

/// Cross-entropy of the classifier logits for one embedding. `raw_weight`
/// columns are normalized internally; gradients (when requested) are taken
/// with respect to `e` and the unnormalized weights and are accumulated.
template <typename Scalar>
Scalar classifier_loss(const Vector<Scalar>& e, const Matrix<Scalar>& raw_weight, int target, const ArcConfig& cfg,
                       ClassifierLoss kind, Vector<Scalar>* grad_e, Matrix<Scalar>* grad_weight);

template <typename Scalar>
Matrix<Scalar> normalize_columns(const Matrix<Scalar>& w);

}  // namespace fhsst
