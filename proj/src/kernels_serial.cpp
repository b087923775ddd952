#include "pnerv/kernels.hpp"

namespace pnerv::kernels {

std::size_t conv_out_dim(std::size_t n, std::size_t k, ConvGeometry g) {
    if (g.stride == 0) throw ShapeError("conv stride must be positive");
    const std::size_t padded = n + 2 * g.padding;
    if (padded < k) throw ShapeError("conv kernel larger than padded input");
    return (padded - k) / g.stride + 1;
}

std::size_t deconv_out_dim(std::size_t n, std::size_t k, ConvGeometry g) {
    if (g.stride == 0) throw ShapeError("deconv stride must be positive");
    const std::size_t full = (n - 1) * g.stride + k;
    if (full <= 2 * g.padding) throw ShapeError("deconv padding consumes the whole output");
    return full - 2 * g.padding;
}

namespace serial {

namespace {
void check_weight(const Tensor& w) {
    if (w.rank() != 4 || w.dim(2) != w.dim(3)) throw ShapeError("conv weight must be out x in x k x k, got " + shape_str(w.shape()));
}
}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g) {
    check_weight(w);
    if (x.rank() != 3 || x.channels() != w.dim(1))
        throw ShapeError("conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    const std::size_t co_n = w.dim(0), ci_n = w.dim(1), k = w.dim(2);
    const std::size_t H = x.height(), W = x.width();
    const std::size_t Ho = conv_out_dim(H, k, g), Wo = conv_out_dim(W, k, g);
    Tensor y = Tensor::chw(co_n, Ho, Wo);
    for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t oh = 0; oh < Ho; ++oh)
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                double acc = bias ? (*bias)[co] : 0.0;
                for (std::size_t ci = 0; ci < ci_n; ++ci)
                    for (std::size_t kh = 0; kh < k; ++kh)
                        for (std::size_t kw = 0; kw < k; ++kw) {
                            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.padding);
                            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.padding);
                            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(H) || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                            acc += w[((co * ci_n + ci) * k + kh) * k + kw] * x(ci, ih, iw);
                        }
                y(co, oh, ow) = acc;
            }
    return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, ConvGeometry g, const Shape& x_shape) {
    check_weight(w);
    if (gy.rank() != 3 || gy.channels() != w.dim(0) || x_shape.size() != 3 || x_shape[0] != w.dim(1))
        throw ShapeError("conv2d_backward_input: gradient " + shape_str(gy.shape()) + " vs weight " + shape_str(w.shape()));
    const std::size_t co_n = w.dim(0), ci_n = w.dim(1), k = w.dim(2);
    const std::size_t H = x_shape[1], W = x_shape[2];
    const std::size_t Ho = gy.height(), Wo = gy.width();
    Tensor gx(x_shape);
    for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t oh = 0; oh < Ho; ++oh)
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                const double gv = gy(co, oh, ow);
                for (std::size_t ci = 0; ci < ci_n; ++ci)
                    for (std::size_t kh = 0; kh < k; ++kh)
                        for (std::size_t kw = 0; kw < k; ++kw) {
                            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.padding);
                            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.padding);
                            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(H) || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                            gx(ci, ih, iw) += gv * w[((co * ci_n + ci) * k + kh) * k + kw];
                        }
            }
    return gx;
}

Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, std::size_t k, ConvGeometry g) {
    if (x.rank() != 3 || gy.rank() != 3) throw ShapeError("conv2d_backward_weight: rank-3 inputs required");
    const std::size_t co_n = gy.channels(), ci_n = x.channels();
    const std::size_t H = x.height(), W = x.width();
    const std::size_t Ho = gy.height(), Wo = gy.width();
    Tensor gw({co_n, ci_n, k, k});
    for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t ci = 0; ci < ci_n; ++ci)
            for (std::size_t kh = 0; kh < k; ++kh)
                for (std::size_t kw = 0; kw < k; ++kw) {
                    double acc = 0.0;
                    for (std::size_t oh = 0; oh < Ho; ++oh)
                        for (std::size_t ow = 0; ow < Wo; ++ow) {
                            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.padding);
                            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.padding);
                            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(H) || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                            acc += gy(co, oh, ow) * x(ci, ih, iw);
                        }
                    gw[((co * ci_n + ci) * k + kh) * k + kw] = acc;
                }
    return gw;
}

}  // namespace serial
}  // namespace pnerv::kernels
