#include "fhsst/layers.hpp"

#include "fhsst/errors.hpp"

#include <algorithm>
#include <limits>

namespace fhsst {
namespace {

int same_extent(int in, int stride) { return (in + stride - 1) / stride; }

int same_pad_before(int in, int out, int kernel, int stride) {
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return total / 2;
}

void check_positive(const WindowGeometry& g) {
  if (!g.out.positive())
    fail(Errc::InvalidConfig, "window op " + to_string(g.kernel) + " stride " + to_string(g.stride) +
                                  " on " + to_string(g.in) + " yields " + to_string(g.out));
}

// Rows of the im2col matrix processed per GEMM; bounds scratch memory to
// roughly 16M scalars regardless of layer size.
Eigen::Index chunk_rows(Eigen::Index patch_len) {
  constexpr Eigen::Index kBudget = Eigen::Index(1) << 24;
  return std::max<Eigen::Index>(1, kBudget / std::max<Eigen::Index>(patch_len, 1));
}

template <typename Scalar>
void im2col(const Tensor4<Scalar>& x, const WindowGeometry& g, Eigen::Index first, Eigen::Index count,
            RowMatrix<Scalar>& col) {
  const int cin = g.in.c;
  const Eigen::Index patch_len = Eigen::Index(g.kernel.volume()) * cin;
  col.resize(count, patch_len);
  const Scalar* src = x.data.data();
  for (Eigen::Index r = 0; r < count; ++r) {
    const Eigen::Index o = first + r;
    const int ox = static_cast<int>(o % g.out.w);
    const int oy = static_cast<int>((o / g.out.w) % g.out.h);
    const int ot = static_cast<int>(o / (Eigen::Index(g.out.w) * g.out.h));
    Scalar* dst = col.data() + r * patch_len;
    for (int kt = 0; kt < g.kernel.t; ++kt) {
      const int it = ot * g.stride.t - g.pad_before.t + kt;
      const bool t_ok = it >= 0 && it < g.in.t;
      for (int ky = 0; ky < g.kernel.h; ++ky) {
        const int iy = oy * g.stride.h - g.pad_before.h + ky;
        const bool y_ok = t_ok && iy >= 0 && iy < g.in.h;
        for (int kx = 0; kx < g.kernel.w; ++kx, dst += cin) {
          const int ix = ox * g.stride.w - g.pad_before.w + kx;
          if (y_ok && ix >= 0 && ix < g.in.w) {
            const Scalar* p = src + ((Eigen::Index(it) * g.in.h + iy) * g.in.w + ix) * cin;
            std::copy(p, p + cin, dst);
          } else {
            std::fill(dst, dst + cin, Scalar(0));
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& col, const WindowGeometry& g, Eigen::Index first,
                Tensor4<Scalar>& dx) {
  const int cin = g.in.c;
  const Eigen::Index patch_len = col.cols();
  Scalar* dst_base = dx.data.data();
  for (Eigen::Index r = 0; r < col.rows(); ++r) {
    const Eigen::Index o = first + r;
    const int ox = static_cast<int>(o % g.out.w);
    const int oy = static_cast<int>((o / g.out.w) % g.out.h);
    const int ot = static_cast<int>(o / (Eigen::Index(g.out.w) * g.out.h));
    const Scalar* src = col.data() + r * patch_len;
    for (int kt = 0; kt < g.kernel.t; ++kt) {
      const int it = ot * g.stride.t - g.pad_before.t + kt;
      const bool t_ok = it >= 0 && it < g.in.t;
      for (int ky = 0; ky < g.kernel.h; ++ky) {
        const int iy = oy * g.stride.h - g.pad_before.h + ky;
        const bool y_ok = t_ok && iy >= 0 && iy < g.in.h;
        for (int kx = 0; kx < g.kernel.w; ++kx, src += cin) {
          const int ix = ox * g.stride.w - g.pad_before.w + kx;
          if (!(y_ok && ix >= 0 && ix < g.in.w)) continue;
          Scalar* p = dst_base + ((Eigen::Index(it) * g.in.h + iy) * g.in.w + ix) * cin;
          for (int c = 0; c < cin; ++c) p[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

WindowGeometry same_geometry(const Shape4& in, Dims3 kernel, Dims3 stride, int out_channels) {
  WindowGeometry g;
  g.in = in;
  g.kernel = kernel;
  g.stride = stride;
  if (stride.t < 1 || stride.h < 1 || stride.w < 1 || kernel.t < 1 || kernel.h < 1 || kernel.w < 1)
    fail(Errc::InvalidConfig, "kernel and stride entries must be >= 1");
  g.out = {same_extent(in.t, stride.t), same_extent(in.h, stride.h), same_extent(in.w, stride.w),
           out_channels};
  g.pad_before = {same_pad_before(in.t, g.out.t, kernel.t, stride.t),
                  same_pad_before(in.h, g.out.h, kernel.h, stride.h),
                  same_pad_before(in.w, g.out.w, kernel.w, stride.w)};
  check_positive(g);
  return g;
}

WindowGeometry explicit_geometry(const Shape4& in, Dims3 kernel, Dims3 stride, Dims3 padding,
                                 int out_channels) {
  WindowGeometry g;
  g.in = in;
  g.kernel = kernel;
  g.stride = stride;
  g.pad_before = padding;
  if (stride.t < 1 || stride.h < 1 || stride.w < 1 || kernel.t < 1 || kernel.h < 1 || kernel.w < 1)
    fail(Errc::InvalidConfig, "kernel and stride entries must be >= 1");
  auto extent = [](int n, int k, int s, int p) {
    const int span = n + 2 * p - k;
    return span < 0 ? 0 : span / s + 1;
  };
  g.out = {extent(in.t, kernel.t, stride.t, padding.t), extent(in.h, kernel.h, stride.h, padding.h),
           extent(in.w, kernel.w, stride.w, padding.w), out_channels};
  check_positive(g);
  return g;
}

template <typename Scalar>
void conv3d_forward(const Tensor4<Scalar>& x, const WindowGeometry& g, const Matrix<Scalar>& weight,
                    const Matrix<Scalar>& bias, bool relu, Tensor4<Scalar>& y) {
  if (!(x.shape == g.in)) fail(Errc::ShapeMismatch, "conv input " + to_string(x.shape) + " vs " + to_string(g.in));
  y = Tensor4<Scalar>(g.out);
  if (g.is_pointwise()) {
    y.data.noalias() = x.data * weight;
  } else {
    const Eigen::Index patch_len = weight.rows();
    const Eigen::Index step = chunk_rows(patch_len);
    RowMatrix<Scalar> col;
    for (Eigen::Index first = 0; first < g.out.positions(); first += step) {
      const Eigen::Index count = std::min(step, g.out.positions() - first);
      im2col(x, g, first, count, col);
      y.data.middleRows(first, count).noalias() = col * weight;
    }
  }
  y.data.rowwise() += bias.col(0).transpose();
  if (relu) y.data = y.data.cwiseMax(Scalar(0));
}

template <typename Scalar>
void conv3d_backward(const Tensor4<Scalar>& x, const Tensor4<Scalar>& y, const WindowGeometry& g,
                     const Matrix<Scalar>& weight, bool relu, const Tensor4<Scalar>& dy,
                     Tensor4<Scalar>* dx, Matrix<Scalar>& dweight, Matrix<Scalar>& dbias) {
  RowMatrix<Scalar> grad = dy.data;
  if (relu) grad = (y.data.array() > Scalar(0)).select(grad, Scalar(0));
  dbias.col(0) += grad.colwise().sum().transpose();
  if (dx && !(dx->shape == g.in)) *dx = Tensor4<Scalar>::zeros(g.in);
  if (g.is_pointwise()) {
    dweight.noalias() += x.data.transpose() * grad;
    if (dx) dx->data.noalias() += grad * weight.transpose();
    return;
  }
  const Eigen::Index patch_len = weight.rows();
  const Eigen::Index step = chunk_rows(patch_len);
  RowMatrix<Scalar> col;
  RowMatrix<Scalar> dcol;
  for (Eigen::Index first = 0; first < g.out.positions(); first += step) {
    const Eigen::Index count = std::min(step, g.out.positions() - first);
    im2col(x, g, first, count, col);
    dweight.noalias() += col.transpose() * grad.middleRows(first, count);
    if (dx) {
      dcol.noalias() = grad.middleRows(first, count) * weight.transpose();
      col2im_add(dcol, g, first, *dx);
    }
  }
}

template <typename Scalar>
void max_pool3d_forward(const Tensor4<Scalar>& x, const WindowGeometry& g, Tensor4<Scalar>& y,
                        std::vector<std::int32_t>* argmax) {
  if (!(x.shape == g.in)) fail(Errc::ShapeMismatch, "pool input " + to_string(x.shape) + " vs " + to_string(g.in));
  if (x.shape.size() > std::numeric_limits<std::int32_t>::max())
    fail(Errc::InvalidConfig, "pool input too large for index bookkeeping");
  const int c = g.in.c;
  y = Tensor4<Scalar>(g.out);
  y.data.setConstant(-std::numeric_limits<Scalar>::infinity());
  if (argmax) argmax->assign(static_cast<std::size_t>(g.out.size()), -1);
  const Scalar* src = x.data.data();
  Scalar* dst = y.data.data();
  for (int ot = 0; ot < g.out.t; ++ot) {
    for (int oy = 0; oy < g.out.h; ++oy) {
      for (int ox = 0; ox < g.out.w; ++ox) {
        const Eigen::Index orow = (Eigen::Index(ot) * g.out.h + oy) * g.out.w + ox;
        Scalar* out = dst + orow * c;
        std::int32_t* arg = argmax ? argmax->data() + orow * c : nullptr;
        for (int kt = 0; kt < g.kernel.t; ++kt) {
          const int it = ot * g.stride.t - g.pad_before.t + kt;
          if (it < 0 || it >= g.in.t) continue;
          for (int ky = 0; ky < g.kernel.h; ++ky) {
            const int iy = oy * g.stride.h - g.pad_before.h + ky;
            if (iy < 0 || iy >= g.in.h) continue;
            for (int kx = 0; kx < g.kernel.w; ++kx) {
              const int ix = ox * g.stride.w - g.pad_before.w + kx;
              if (ix < 0 || ix >= g.in.w) continue;
              const Eigen::Index irow = (Eigen::Index(it) * g.in.h + iy) * g.in.w + ix;
              const Scalar* in = src + irow * c;
              if (arg) {
                for (int k = 0; k < c; ++k) {
                  if (in[k] > out[k] || arg[k] < 0) {
                    out[k] = in[k];
                    arg[k] = static_cast<std::int32_t>(irow * c + k);
                  }
                }
              } else {
                for (int k = 0; k < c; ++k) out[k] = std::max(out[k], in[k]);
              }
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void max_pool3d_backward(const std::vector<std::int32_t>& argmax, const Tensor4<Scalar>& dy,
                         Tensor4<Scalar>& dx) {
  const Scalar* g = dy.data.data();
  Scalar* out = dx.data.data();
  for (std::size_t i = 0; i < argmax.size(); ++i) out[argmax[i]] += g[i];
}

#define FHSST_INSTANTIATE_LAYERS(S)                                                                \
  template void conv3d_forward<S>(const Tensor4<S>&, const WindowGeometry&, const Matrix<S>&,     \
                                  const Matrix<S>&, bool, Tensor4<S>&);                             \
  template void conv3d_backward<S>(const Tensor4<S>&, const Tensor4<S>&, const WindowGeometry&,   \
                                   const Matrix<S>&, bool, const Tensor4<S>&, Tensor4<S>*,         \
                                   Matrix<S>&, Matrix<S>&);                                         \
  template void max_pool3d_forward<S>(const Tensor4<S>&, const WindowGeometry&, Tensor4<S>&,      \
                                      std::vector<std::int32_t>*);                                  \
  template void max_pool3d_backward<S>(const std::vector<std::int32_t>&, const Tensor4<S>&,        \
                                       Tensor4<S>&);

FHSST_INSTANTIATE_LAYERS(float)
FHSST_INSTANTIATE_LAYERS(double)

}  // namespace fhsst
