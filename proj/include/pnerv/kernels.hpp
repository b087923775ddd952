#pragma once

// Raw convolution kernels. Every kernel exists twice: a serial reference in
// `kernels::serial` that spells out the textbook gather/scatter loops, and an
// OpenMP version in `kernels::omp` that is parallel over one channel axis.
// Both accumulate each output element in the same order, so their results are
// bit-identical; tests hold them to exact equality.

#include "pnerv/tensor.hpp"

namespace pnerv::kernels {

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// floor((n + 2p - k) / s) + 1, or throws if the window never fits.
std::size_t conv_out_dim(std::size_t n, std::size_t k, ConvGeometry g);
/// (n - 1) * s - 2p + k, or throws if negative.
std::size_t deconv_out_dim(std::size_t n, std::size_t k, ConvGeometry g);

namespace serial {

/// y[co] = b[co] + sum_{ci,kh,kw} w[co,ci,kh,kw] * x[ci, oh*s-p+kh, ow*s-p+kw]
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g);
/// Adjoint of conv2d_forward in x. Produces a tensor of shape `x_shape`.
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, ConvGeometry g, const Shape& x_shape);
/// Gradient of <y, gy> in w. Produces a tensor shaped like w (k x k kernel).
Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, std::size_t k, ConvGeometry g);

}  // namespace serial

namespace omp {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g);
Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, ConvGeometry g, const Shape& x_shape);
Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, std::size_t k, ConvGeometry g);

}  // namespace omp

// Dispatch used by the differentiable ops.
inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g) {
    return omp::conv2d_forward(x, w, bias, g);
}
inline Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, ConvGeometry g, const Shape& x_shape) {
    return omp::conv2d_backward_input(gy, w, g, x_shape);
}
inline Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, std::size_t k, ConvGeometry g) {
    return omp::conv2d_backward_weight(x, gy, k, g);
}

/// Number of OpenMP threads the omp kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace pnerv::kernels
