#pragma once

#include "fhsst/tensor.hpp"

#include <cstdint>
#include <vector>

namespace fhsst {

/// Resolved geometry of a sliding-window op (convolution or pooling).
/// "Same" padding follows the usual convention: out = ceil(in / stride),
/// with the total padding split floor-first.
struct WindowGeometry {
  Shape4 in;
  Shape4 out;
  Dims3 kernel;
  Dims3 stride;
  Dims3 pad_before;

  bool is_pointwise() const {
    return kernel == Dims3{1, 1, 1} && stride == Dims3{1, 1, 1} && pad_before == Dims3{0, 0, 0};
  }
};

/// Throws InvalidConfig when any output extent would be non-positive.
WindowGeometry same_geometry(const Shape4& in, Dims3 kernel, Dims3 stride, int out_channels);
WindowGeometry explicit_geometry(const Shape4& in, Dims3 kernel, Dims3 stride, Dims3 padding,
                                 int out_channels);

// Convolution weights are stored as a (kt*kh*kw*c_in) x c_out matrix whose
// row order matches the im2col patch layout (tap-major, channel-minor).

template <typename Scalar>
void conv3d_forward(const Tensor4<Scalar>& x, const WindowGeometry& g, const Matrix<Scalar>& weight,
                    const Matrix<Scalar>& bias, bool relu, Tensor4<Scalar>& y);

/// Accumulates into dweight, dbias and (when non-null) dx. `y` is the forward
/// output, needed for the rectifier mask. A dx of the wrong shape is reset to
/// zeros of the input shape first.
template <typename Scalar>
void conv3d_backward(const Tensor4<Scalar>& x, const Tensor4<Scalar>& y, const WindowGeometry& g,
                     const Matrix<Scalar>& weight, bool relu, const Tensor4<Scalar>& dy,
                     Tensor4<Scalar>* dx, Matrix<Scalar>& dweight, Matrix<Scalar>& dbias);

/// Max pooling over a precomputed window geometry; padded cells never win. When `argmax`
/// is non-null it receives, per output element, the flat index of the
/// winning input element.
template <typename Scalar>
void max_pool3d_forward(const Tensor4<Scalar>& x, const WindowGeometry& g, Tensor4<Scalar>& y,
                        std::vector<std::int32_t>* argmax);

/// Scatter-adds dy into dx through the recorded argmax indices.
template <typename Scalar>
void max_pool3d_backward(const std::vector<std::int32_t>& argmax, const Tensor4<Scalar>& dy,
                         Tensor4<Scalar>& dx);

}  // namespace fhsst
