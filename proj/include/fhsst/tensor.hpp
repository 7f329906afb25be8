#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace fhsst {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// (temporal, height, width) triple used for kernels, strides and paddings.
struct Dims3 {
  int t = 1;
  int h = 1;
  int w = 1;

  int volume() const { return t * h * w; }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

/// Channels-last 4D shape (t, h, w, c).
struct Shape4 {
  int t = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  Eigen::Index positions() const { return Eigen::Index(t) * h * w; }
  Eigen::Index size() const { return positions() * c; }
  bool positive() const { return t > 0 && h > 0 && w > 0 && c > 0; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Dims3& d);
std::string to_string(const Shape4& s);

/// Dense channels-last volume. Row r of `data` holds the channel vector at
/// spatio-temporal position r = (t * h + y) * w + x, so a 1x1x1 convolution
/// is a plain matrix product and channel concatenation is a column block.
template <typename Scalar>
struct Tensor4 {
  Shape4 shape;
  RowMatrix<Scalar> data;

  Tensor4() = default;
  explicit Tensor4(const Shape4& s) : shape(s), data(s.positions(), s.c) {}

  static Tensor4 zeros(const Shape4& s) {
    Tensor4 out(s);
    out.data.setZero();
    return out;
  }

  Eigen::Index row(int t, int y, int x) const {
    return (Eigen::Index(t) * shape.h + y) * shape.w + x;
  }
  Scalar& operator()(int t, int y, int x, int c) { return data(row(t, y, x), c); }
  Scalar operator()(int t, int y, int x, int c) const { return data(row(t, y, x), c); }

  template <typename Other>
  Tensor4<Other> cast() const {
    Tensor4<Other> out;
    out.shape = shape;
    out.data = data.template cast<Other>();
    return out;
  }
};

}  // namespace fhsst
