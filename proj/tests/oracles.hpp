#pragma once

// Slow, direct reference implementations used as test oracles. Each one is
// written from the definition, sharing no code with the library.

#include "fhsst/image.hpp"
#include "fhsst/losses.hpp"
#include "fhsst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>
#include <vector>

namespace oracle {

// Half-pixel-centre bilinear resize, built as two separable 1D weight
// matrices applied to each channel.
inline Eigen::MatrixXd interp_matrix(int in, int out) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out, in);
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * in / out - 0.5;
    src = std::min(std::max(src, 0.0), double(in - 1));
    const int lo = int(src);
    const double f = src - lo;
    m(i, lo) += 1.0 - f;
    if (f > 0) m(i, std::min(lo + 1, in - 1)) += f;
  }
  return m;
}

inline fhsst::RoiImage bilinear(const fhsst::RoiImage& img, int h, int w) {
  const Eigen::MatrixXd ry = interp_matrix(img.height, h), rx = interp_matrix(img.width, w);
  fhsst::RoiImage out(h, w);
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd plane(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) plane(y, x) = img(y, x, c);
    const Eigen::MatrixXd r = ry * plane * rx.transpose();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(y, x, c) = float(std::clamp(r(y, x), 0.0, 1.0));
  }
  return out;
}

// All (a, p, n) with a valid label pattern and a positive hinge, in
// lexicographic order.
template <typename Scalar>
std::vector<std::tuple<int, int, int>> all_valid_triplets(const fhsst::RowMatrix<Scalar>& e, const std::vector<int>& labels,
                                                          double margin) {
  auto dist = [&](int i, int j) {
    const Eigen::Matrix<double, Eigen::Dynamic, 1> a = e.row(i).transpose().template cast<double>();
    const Eigen::Matrix<double, Eigen::Dynamic, 1> b = e.row(j).transpose().template cast<double>();
    double c = a.dot(b) / (a.norm() * b.norm());
    c = std::clamp(c, -1.0, 1.0);
    return 1.0 - c;
  };
  std::vector<std::tuple<int, int, int>> out;
  const int n = int(labels.size());
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) {
        if (a == p || labels[a] != labels[p] || labels[a] == labels[q]) continue;
        if (dist(a, p) - dist(a, q) + margin > 0) out.emplace_back(a, p, q);
      }
  return out;
}

// Error rates at threshold t under "accept iff score >= t", counted directly.
struct Rates {
  double fmr, fnmr;
};

inline Rates rates_at(const std::vector<double>& gen, const std::vector<double>& imp, double t) {
  std::size_t fa = 0, fr = 0;
  for (double s : imp) fa += s >= t;
  for (double s : gen) fr += s < t;
  return {double(fa) / imp.size(), double(fr) / gen.size()};
}

// Candidate thresholds: -inf, every distinct observed score, +inf.
inline std::vector<double> thresholds(const std::vector<double>& gen, const std::vector<double>& imp) {
  std::set<double> s(gen.begin(), gen.end());
  s.insert(imp.begin(), imp.end());
  std::vector<double> t;
  t.push_back(-std::numeric_limits<double>::infinity());
  t.insert(t.end(), s.begin(), s.end());
  t.push_back(std::numeric_limits<double>::infinity());
  return t;
}

// O(n^2) sweep: first sign change of FMR - FNMR, linearly interpolated.
inline double eer(const std::vector<double>& gen, const std::vector<double>& imp) {
  const auto ts = thresholds(gen, imp);
  Rates prev = rates_at(gen, imp, ts[0]);
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const Rates cur = rates_at(gen, imp, ts[i]);
    const double d0 = prev.fmr - prev.fnmr, d1 = cur.fmr - cur.fnmr;
    if (d1 == 0.0) return (cur.fmr + cur.fnmr) / 2;
    if (d0 > 0 && d1 < 0) {
      const double a = d0 / (d0 - d1);
      const double fmr = prev.fmr + a * (cur.fmr - prev.fmr);
      const double fnmr = prev.fnmr + a * (cur.fnmr - prev.fnmr);
      return (fmr + fnmr) / 2;
    }
    prev = cur;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// 1 - FNMR at the smallest threshold with FMR <= target; NaN if none.
inline double tmr_at(const std::vector<double>& gen, const std::vector<double>& imp, double target) {
  for (double t : thresholds(gen, imp)) {
    const Rates r = rates_at(gen, imp, t);
    if (r.fmr <= target) return 1.0 - r.fnmr;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace oracle
