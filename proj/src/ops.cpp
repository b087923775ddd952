#include "pnerv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pnerv {

ConvParams ConvParams::conv(std::size_t out_channels, std::size_t in_channels, std::size_t k) {
    if (k % 2 == 0) throw ShapeError("convolution kernel size must be odd, got " + std::to_string(k));
    return ConvParams{Tensor({out_channels, in_channels, k, k}), Tensor::vec(out_channels)};
}

ConvParams ConvParams::transposed(std::size_t in_channels, std::size_t out_channels, std::size_t k) {
    if (k == 0) throw ShapeError("kernel size must be positive");
    return ConvParams{Tensor({in_channels, out_channels, k, k}), Tensor::vec(out_channels)};
}

void ConvParams::init_kaiming(Rng& rng) {
    weight = kaiming_normal_fan_out(weight.shape(), rng);
    bias.fill(0.0);
}

BatchNormState::BatchNormState(std::size_t channels)
    : gamma(Tensor::vec(channels, 1.0)),
      beta(Tensor::vec(channels, 0.0)),
      running_mean(Tensor::vec(channels, 0.0)),
      running_var(Tensor::vec(channels, 1.0)) {}

double gelu_scalar(double x) {
    const double a = std::sqrt(2.0 / std::numbers::pi);
    return 0.5 * x * (1.0 + std::tanh(a * (x + kGeluCoeff * x * x * x)));
}

double gelu_grad_scalar(double x) {
    const double a = std::sqrt(2.0 / std::numbers::pi);
    const double th = std::tanh(a * (x + kGeluCoeff * x * x * x));
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * a * (1.0 + 3.0 * kGeluCoeff * x * x);
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void check_rank3(const Tensor& x, const char* what) {
    if (x.rank() != 3) throw ShapeError(std::string(what) + ": expected C x H x W, got " + shape_str(x.shape()));
}

void check_conv(const Tensor& x, const ConvParams& p) {
    check_rank3(x, "conv2d");
    if (p.weight.rank() != 4 || p.weight.dim(1) != x.channels())
        throw ShapeError("conv2d: input has " + std::to_string(x.channels()) + " channels, weight is " + shape_str(p.weight.shape()));
    if (p.weight.dim(2) % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
    if (p.bias.size() != p.weight.dim(0)) throw ShapeError("conv2d: bias length mismatch");
}

void check_deconv(const Tensor& x, const ConvParams& p) {
    check_rank3(x, "deconv2d");
    if (p.weight.rank() != 4 || p.weight.dim(0) != x.channels())
        throw ShapeError("deconv2d: input has " + std::to_string(x.channels()) + " channels, weight is " + shape_str(p.weight.shape()));
    if (p.bias.size() != p.weight.dim(1)) throw ShapeError("deconv2d: bias length mismatch");
}

Tensor deconv_forward(const Tensor& x, const Tensor& w, const Tensor& bias, kernels::ConvGeometry g) {
    const std::size_t k = w.dim(2);
    const Shape out{w.dim(1), kernels::deconv_out_dim(x.height(), k, g), kernels::deconv_out_dim(x.width(), k, g)};
    // The deconv output must map back onto x under the matching convolution.
    if (kernels::conv_out_dim(out[1], k, g) != x.height() || kernels::conv_out_dim(out[2], k, g) != x.width())
        throw ShapeError("deconv2d: geometry is not invertible for input " + shape_str(x.shape()));
    Tensor y = kernels::conv2d_backward_input(x, w, g, out);
    for (std::size_t c = 0; c < out[0]; ++c)
        for (double& v : y.channel(c)) v += bias[c];
    return y;
}

void check_shuffle(const Tensor& x, std::size_t r) {
    check_rank3(x, "pixel_shuffle");
    if (r == 0 || x.channels() % (r * r) != 0)
        throw ShapeError("pixel_shuffle: " + std::to_string(x.channels()) + " channels not divisible by r^2 = " + std::to_string(r * r));
}

struct Tap {
    std::size_t i0, i1;
    double frac;
};

// align_corners=false source coordinate: (dst + 0.5) / r - 0.5, clamped at 0.
std::vector<Tap> bilinear_taps(std::size_t n_in, std::size_t r) {
    std::vector<Tap> taps(n_in * r);
    for (std::size_t d = 0; d < taps.size(); ++d) {
        const double src = std::max(0.0, (static_cast<double>(d) + 0.5) / static_cast<double>(r) - 0.5);
        const auto i0 = std::min(static_cast<std::size_t>(src), n_in - 1);
        const std::size_t i1 = std::min(i0 + 1, n_in - 1);
        taps[d] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

template <class F>
Tensor map(const Tensor& x, F f) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return y;
}

struct ChannelStats {
    std::vector<double> mean, var;
};

ChannelStats channel_stats(const Tensor& x) {
    const std::size_t C = x.channels(), N = x.height() * x.width();
    ChannelStats s{std::vector<double>(C), std::vector<double>(C)};
    for (std::size_t c = 0; c < C; ++c) {
        const auto ch = x.channel(c);
        double m = 0.0;
        for (double v : ch) m += v;
        m /= static_cast<double>(N);
        double var = 0.0;
        for (double v : ch) var += (v - m) * (v - m);
        s.mean[c] = m;
        s.var[c] = var / static_cast<double>(N);
    }
    return s;
}

void update_running(BatchNormState& st, const ChannelStats& s, std::size_t n) {
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    for (std::size_t c = 0; c < st.channels(); ++c) {
        st.running_mean[c] = (1.0 - st.momentum) * st.running_mean[c] + st.momentum * s.mean[c];
        st.running_var[c] = (1.0 - st.momentum) * st.running_var[c] + st.momentum * s.var[c] * unbias;
    }
}

Tensor normalize(const Tensor& x, const std::vector<double>& mean, const std::vector<double>& var, const Tensor& gamma,
                 const Tensor& beta, double eps) {
    Tensor y(x.shape());
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + eps);
        const auto src = x.channel(c);
        auto dst = y.channel(c);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = gamma[c] * (src[i] - mean[c]) * inv + beta[c];
    }
    return y;
}

void check_bn(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    check_rank3(x, "batch_norm2d");
    if (gamma.size() != x.channels() || beta.size() != x.channels())
        throw ShapeError("batch_norm2d: state has " + std::to_string(gamma.size()) + " channels, input " + shape_str(x.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p, std::size_t stride, std::size_t padding) {
    check_conv(x, p);
    return kernels::conv2d_forward(x, p.weight, &p.bias, {stride, padding});
}

Tensor deconv2d(const Tensor& x, const ConvParams& p, std::size_t stride, std::size_t padding) {
    check_deconv(x, p);
    return deconv_forward(x, p.weight, p.bias, {stride, padding});
}

Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
    check_shuffle(x, r);
    const std::size_t C = x.channels() / (r * r), H = x.height(), W = x.width();
    Tensor y = Tensor::chw(C, H * r, W * r);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t w = 0; w < W; ++w) y(c, h * r + i, w * r + j) = x(c * r * r + i * r + j, h, w);
    return y;
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t r) {
    check_rank3(x, "pixel_unshuffle");
    if (r == 0 || x.height() % r != 0 || x.width() % r != 0) throw ShapeError("pixel_unshuffle: spatial dims not divisible by r");
    const std::size_t C = x.channels(), H = x.height() / r, W = x.width() / r;
    Tensor y = Tensor::chw(C * r * r, H, W);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t w = 0; w < W; ++w) y(c * r * r + i * r + j, h, w) = x(c, h * r + i, w * r + j);
    return y;
}

Tensor bilinear_upsample(const Tensor& x, std::size_t r) {
    check_rank3(x, "bilinear_upsample");
    if (r == 0) throw ShapeError("bilinear_upsample: r must be >= 1");
    const auto th = bilinear_taps(x.height(), r), tw = bilinear_taps(x.width(), r);
    Tensor y = Tensor::chw(x.channels(), th.size(), tw.size());
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t oh = 0; oh < th.size(); ++oh)
            for (std::size_t ow = 0; ow < tw.size(); ++ow) {
                const Tap a = th[oh], b = tw[ow];
                const double top = (1.0 - b.frac) * x(c, a.i0, b.i0) + b.frac * x(c, a.i0, b.i1);
                const double bot = (1.0 - b.frac) * x(c, a.i1, b.i0) + b.frac * x(c, a.i1, b.i1);
                y(c, oh, ow) = (1.0 - a.frac) * top + a.frac * bot;
            }
    return y;
}

Tensor relu(const Tensor& x) {
    return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}
Tensor gelu(const Tensor& x) { return map(x, gelu_scalar); }
Tensor sigmoid(const Tensor& x) { return map(x, sigmoid_scalar); }

Tensor batch_norm2d(const Tensor& x, BatchNormState& state, bool training) {
    check_bn(x, state.gamma, state.beta);
    if (!training) {
        return normalize(x, state.running_mean.storage(), state.running_var.storage(), state.gamma, state.beta, state.eps);
    }
    const auto s = channel_stats(x);
    update_running(state, s, x.height() * x.width());
    return normalize(x, s.mean, s.var, state.gamma, state.beta, state.eps);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check_rank3(a, "concat_channels");
    check_rank3(b, "concat_channels");
    if (a.height() != b.height() || a.width() != b.width())
        throw ShapeError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor y = Tensor::chw(a.channels() + b.channels(), a.height(), a.width());
    std::copy(a.storage().begin(), a.storage().end(), y.storage().begin());
    std::copy(b.storage().begin(), b.storage().end(), y.storage().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return y;
}

namespace ad {

Var conv2d(Tape& t, Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
    ConvParams p{t.value(weight), t.value(bias)};
    const Tensor& xv = t.value(x);
    Tensor y = pnerv::conv2d(xv, p, stride, padding);
    const kernels::ConvGeometry g{stride, padding};
    return t.record("conv2d", std::move(y), {x, weight, bias},
                    [xv, w = std::move(p.weight), g](const Tensor& gy, std::span<Tensor* const> gin) {
                        if (gin[0]) *gin[0] += kernels::conv2d_backward_input(gy, w, g, xv.shape());
                        if (gin[1]) *gin[1] += kernels::conv2d_backward_weight(xv, gy, w.dim(2), g);
                        if (gin[2])
                            for (std::size_t c = 0; c < gy.channels(); ++c)
                                for (double v : gy.channel(c)) (*gin[2])[c] += v;
                    });
}

Var deconv2d(Tape& t, Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
    ConvParams p{t.value(weight), t.value(bias)};
    const Tensor& xv = t.value(x);
    Tensor y = pnerv::deconv2d(xv, p, stride, padding);
    const kernels::ConvGeometry g{stride, padding};
    return t.record("deconv2d", std::move(y), {x, weight, bias},
                    [xv, w = std::move(p.weight), g](const Tensor& gy, std::span<Tensor* const> gin) {
                        if (gin[0]) *gin[0] += kernels::conv2d_forward(gy, w, nullptr, g);
                        if (gin[1]) *gin[1] += kernels::conv2d_backward_weight(gy, xv, w.dim(2), g);
                        if (gin[2])
                            for (std::size_t c = 0; c < gy.channels(); ++c)
                                for (double v : gy.channel(c)) (*gin[2])[c] += v;
                    });
}

Var pixel_shuffle(Tape& t, Var x, std::size_t r) {
    return t.record("pixel_shuffle", pnerv::pixel_shuffle(t.value(x), r), {x},
                    [r](const Tensor& gy, std::span<Tensor* const> gin) {
                        if (gin[0]) *gin[0] += pixel_unshuffle(gy, r);
                    });
}

Var bilinear_upsample(Tape& t, Var x, std::size_t r) {
    const Tensor& xv = t.value(x);
    Tensor y = pnerv::bilinear_upsample(xv, r);
    return t.record("bilinear_upsample", std::move(y), {x},
                    [r, in_shape = xv.shape()](const Tensor& gy, std::span<Tensor* const> gin) {
                        if (!gin[0]) return;
                        Tensor& gx = *gin[0];
                        const auto th = bilinear_taps(in_shape[1], r), tw = bilinear_taps(in_shape[2], r);
                        for (std::size_t c = 0; c < in_shape[0]; ++c)
                            for (std::size_t oh = 0; oh < th.size(); ++oh)
                                for (std::size_t ow = 0; ow < tw.size(); ++ow) {
                                    const Tap a = th[oh], b = tw[ow];
                                    const double g = gy(c, oh, ow);
                                    gx(c, a.i0, b.i0) += g * (1.0 - a.frac) * (1.0 - b.frac);
                                    gx(c, a.i0, b.i1) += g * (1.0 - a.frac) * b.frac;
                                    gx(c, a.i1, b.i0) += g * a.frac * (1.0 - b.frac);
                                    gx(c, a.i1, b.i1) += g * a.frac * b.frac;
                                }
                    });
}

Var relu(Tape& t, Var x) {
    const Tensor& xv = t.value(x);
    return t.record("relu", pnerv::relu(xv), {x}, [xv](const Tensor& gy, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gy.size(); ++i)
            if (xv[i] > 0.0) (*gin[0])[i] += gy[i];
    });
}

Var gelu(Tape& t, Var x) {
    const Tensor& xv = t.value(x);
    return t.record("gelu", pnerv::gelu(xv), {x}, [xv](const Tensor& gy, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i] * gelu_grad_scalar(xv[i]);
    });
}

Var sigmoid(Tape& t, Var x) {
    Tensor y = pnerv::sigmoid(t.value(x));
    return t.record("sigmoid", y, {x}, [y](const Tensor& gy, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i] * y[i] * (1.0 - y[i]);
    });
}

Var batch_norm2d(Tape& t, Var x, Var gamma, Var beta, double eps, BatchNormState* running) {
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gamma);
    check_bn(xv, gv, t.value(beta));
    const auto s = channel_stats(xv);
    if (running) update_running(*running, s, xv.height() * xv.width());
    Tensor y = normalize(xv, s.mean, s.var, gv, t.value(beta), eps);

    // Normalized input, kept for the backward pass.
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(xv.channels());
    for (std::size_t c = 0; c < xv.channels(); ++c) {
        inv_std[c] = 1.0 / std::sqrt(s.var[c] + eps);
        const auto src = xv.channel(c);
        auto dst = xhat.channel(c);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - s.mean[c]) * inv_std[c];
    }
    return t.record("batch_norm2d", std::move(y), {x, gamma, beta},
                    [xhat = std::move(xhat), inv_std = std::move(inv_std), gv](const Tensor& gy, std::span<Tensor* const> gin) {
                        const auto n = static_cast<double>(gy.height() * gy.width());
                        for (std::size_t c = 0; c < gy.channels(); ++c) {
                            const auto g = gy.channel(c);
                            const auto xh = xhat.channel(c);
                            double sum_g = 0.0, sum_gx = 0.0;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                                sum_g += g[i];
                                sum_gx += g[i] * xh[i];
                            }
                            if (gin[1]) (*gin[1])[c] += sum_gx;
                            if (gin[2]) (*gin[2])[c] += sum_g;
                            if (gin[0]) {
                                auto dx = gin[0]->channel(c);
                                const double scale = gv[c] * inv_std[c] / n;
                                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += scale * (n * g[i] - sum_g - xh[i] * sum_gx);
                            }
                        }
                    });
}

Var batch_norm2d_eval(Tape& t, Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var, double eps) {
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gamma);
    check_bn(xv, gv, t.value(beta));
    Tensor y = normalize(xv, running_mean.storage(), running_var.storage(), gv, t.value(beta), eps);
    return t.record("batch_norm2d_eval", std::move(y), {x, gamma, beta},
                    [xv, gv, running_mean, running_var, eps](const Tensor& gy, std::span<Tensor* const> gin) {
                        for (std::size_t c = 0; c < gy.channels(); ++c) {
                            const double inv = 1.0 / std::sqrt(running_var[c] + eps);
                            const auto g = gy.channel(c);
                            const auto xc = xv.channel(c);
                            for (std::size_t i = 0; i < g.size(); ++i) {
                                if (gin[0]) gin[0]->channel(c)[i] += g[i] * gv[c] * inv;
                                if (gin[1]) (*gin[1])[c] += g[i] * (xc[i] - running_mean[c]) * inv;
                                if (gin[2]) (*gin[2])[c] += g[i];
                            }
                        }
                    });
}

Var add(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "add");
    return t.record("add", t.value(a) + t.value(b), {a, b}, [](const Tensor& gy, std::span<Tensor* const> gin) {
        if (gin[0]) *gin[0] += gy;
        if (gin[1]) *gin[1] += gy;
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require_same_shape(av, bv, "mul");
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    return t.record("mul", std::move(y), {a, b}, [av, bv](const Tensor& gy, std::span<Tensor* const> gin) {
        for (std::size_t i = 0; i < gy.size(); ++i) {
            if (gin[0]) (*gin[0])[i] += gy[i] * bv[i];
            if (gin[1]) (*gin[1])[i] += gy[i] * av[i];
        }
    });
}

Var gated_blend(Tape& t, Var h, Var n, Var s) {
    const Tensor& hv = t.value(h);
    const Tensor& nv = t.value(n);
    const Tensor& sv = t.value(s);
    require_same_shape(hv, nv, "gated_blend");
    require_same_shape(hv, sv, "gated_blend");
    Tensor y(hv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = hv[i] * (1.0 - sv[i]) + nv[i] * sv[i];
    return t.record("gated_blend", std::move(y), {h, n, s}, [hv, nv, sv](const Tensor& gy, std::span<Tensor* const> gin) {
        for (std::size_t i = 0; i < gy.size(); ++i) {
            if (gin[0]) (*gin[0])[i] += gy[i] * (1.0 - sv[i]);
            if (gin[1]) (*gin[1])[i] += gy[i] * sv[i];
            if (gin[2]) (*gin[2])[i] += gy[i] * (nv[i] - hv[i]);
        }
    });
}

Var concat_channels(Tape& t, Var a, Var b) {
    const std::size_t split = t.value(a).size();
    return t.record("concat_channels", pnerv::concat_channels(t.value(a), t.value(b)), {a, b},
                    [split](const Tensor& gy, std::span<Tensor* const> gin) {
                        for (std::size_t i = 0; i < gy.size(); ++i) {
                            if (i < split) {
                                if (gin[0]) (*gin[0])[i] += gy[i];
                            } else if (gin[1]) {
                                (*gin[1])[i - split] += gy[i];
                            }
                        }
                    });
}

Var sum(Tape& t, Var x) {
    return t.record("sum", Tensor::vec({pnerv::sum(t.value(x))}), {x}, [](const Tensor& gy, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (double& v : gin[0]->storage()) v += gy[0];
    });
}

Var weighted_sum(Tape& t, Var x, const Tensor& w) {
    return t.record("weighted_sum", Tensor::vec({dot(t.value(x), w)}), {x}, [w](const Tensor& gy, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < w.size(); ++i) (*gin[0])[i] += gy[0] * w[i];
    });
}

Var mse(Tape& t, Var pred, const Tensor& target) {
    const Tensor& pv = t.value(pred);
    require_same_shape(pv, target, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) acc += (pv[i] - target[i]) * (pv[i] - target[i]);
    const auto n = static_cast<double>(pv.size());
    return t.record("mse", Tensor::vec({acc / n}), {pred}, [pv, target, n](const Tensor& gy, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < pv.size(); ++i) (*gin[0])[i] += gy[0] * 2.0 * (pv[i] - target[i]) / n;
    });
}

}  // namespace ad
}  // namespace pnerv
