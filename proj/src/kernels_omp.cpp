#include "pnerv/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pnerv::kernels {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace omp {

namespace {

using Index = std::ptrdiff_t;

// Output positions o in [lo, hi) whose tap o*s - p + kofs lands inside [0, n).
struct Range {
    Index lo, hi;
};

Range valid_range(std::size_t n_in, std::size_t n_out, std::size_t kofs, ConvGeometry g) {
    const Index s = static_cast<Index>(g.stride);
    const Index shift = static_cast<Index>(kofs) - static_cast<Index>(g.padding);
    // o*s + shift >= 0  ->  o >= ceil(-shift / s)
    Index lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
    // o*s + shift <= n_in - 1  ->  o <= floor((n_in - 1 - shift) / s)
    const Index top = static_cast<Index>(n_in) - 1 - shift;
    Index hi = top < 0 ? 0 : top / s + 1;
    hi = std::min<Index>(hi, static_cast<Index>(n_out));
    lo = std::min(lo, hi);
    return {lo, hi};
}

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
    const Index s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
    Tensor y = Tensor::chw(co_n, Ho, Wo);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* yd = y.data().data();

#pragma omp parallel for schedule(static)
    for (Index co = 0; co < static_cast<Index>(co_n); ++co) {
        double* plane = yd + co * Ho * Wo;
        std::fill(plane, plane + Ho * Wo, bias ? (*bias)[co] : 0.0);
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const double* xc = xd + ci * H * W;
            for (std::size_t kh = 0; kh < k; ++kh) {
                const Range rh = valid_range(H, Ho, kh, g);
                for (std::size_t kw = 0; kw < k; ++kw) {
                    const Range rw = valid_range(W, Wo, kw, g);
                    const double wv = wd[((co * ci_n + ci) * k + kh) * k + kw];
                    const Index shift = static_cast<Index>(kw) - p;
                    for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                        const double* xrow = xc + (oh * s - p + static_cast<Index>(kh)) * W;
                        double* yrow = plane + oh * Wo;
                        if (s == 1) {
                            const double* xs = xrow + shift;
                            for (Index ow = rw.lo; ow < rw.hi; ++ow) yrow[ow] += wv * xs[ow];
                        } else {
                            for (Index ow = rw.lo; ow < rw.hi; ++ow) yrow[ow] += wv * xrow[ow * s + shift];
                        }
                    }
                }
            }
        }
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
    const Index s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
    Tensor gx(x_shape);
    const double* gyd = gy.data().data();
    const double* wd = w.data().data();
    double* gxd = gx.data().data();

    // For a fixed input element the serial scatter adds contributions in
    // (co, oh ascending, ow ascending) order. Since kh = ih - oh*s + p, that is
    // the same as (co, kh descending, kw descending), which lets each tap be
    // applied as a contiguous row update.
#pragma omp parallel for schedule(static)
    for (Index ci = 0; ci < static_cast<Index>(ci_n); ++ci) {
        double* plane = gxd + ci * H * W;
        for (std::size_t co = 0; co < co_n; ++co) {
            const double* wk = wd + (co * ci_n + ci) * k * k;
            const double* gplane = gyd + co * Ho * Wo;
            for (std::size_t kh = k; kh-- > 0;) {
                const Range rh = valid_range(H, Ho, kh, g);
                for (std::size_t kw = k; kw-- > 0;) {
                    const Range rw = valid_range(W, Wo, kw, g);
                    const double wv = wk[kh * k + kw];
                    const Index shift = static_cast<Index>(kw) - p;
                    for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                        double* xrow = plane + (oh * s - p + static_cast<Index>(kh)) * W;
                        const double* grow = gplane + oh * Wo;
                        if (s == 1) {
                            double* xs = xrow + shift;
                            for (Index ow = rw.lo; ow < rw.hi; ++ow) xs[ow] += grow[ow] * wv;
                        } else {
                            for (Index ow = rw.lo; ow < rw.hi; ++ow) xrow[ow * s + shift] += grow[ow] * wv;
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, std::size_t k, ConvGeometry g) {
    if (x.rank() != 3 || gy.rank() != 3) throw ShapeError("conv2d_backward_weight: rank-3 inputs required");
    const std::size_t co_n = gy.channels(), ci_n = x.channels();
    const std::size_t H = x.height(), W = x.width();
    const std::size_t Ho = gy.height(), Wo = gy.width();
    const Index s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
    Tensor gw({co_n, ci_n, k, k});
    const double* xd = x.data().data();
    const double* gyd = gy.data().data();
    double* gwd = gw.data().data();

#pragma omp parallel for schedule(static)
    for (Index co = 0; co < static_cast<Index>(co_n); ++co) {
        const double* gplane = gyd + co * Ho * Wo;
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const double* xc = xd + ci * H * W;
            for (std::size_t kh = 0; kh < k; ++kh) {
                const Range rh = valid_range(H, Ho, kh, g);
                for (std::size_t kw = 0; kw < k; ++kw) {
                    const Range rw = valid_range(W, Wo, kw, g);
                    double acc = 0.0;
                    for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                        const double* xrow = xc + (oh * s - p + static_cast<Index>(kh)) * W;
                        const double* grow = gplane + oh * Wo;
                        for (Index ow = rw.lo; ow < rw.hi; ++ow) acc += grow[ow] * xrow[ow * s - p + static_cast<Index>(kw)];
                    }
                    gwd[((co * ci_n + ci) * k + kh) * k + kw] = acc;
                }
            }
        }
    }
    return gw;
}

}  // namespace omp
}  // namespace pnerv::kernels
