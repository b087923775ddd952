#include "pnerv/bsm.hpp"

#include <stdexcept>

namespace pnerv {

BSMParams BSMParams::make(std::size_t c_shortcut, std::size_t channels, std::size_t kernel) {
    return BSMParams{ConvParams::conv(channels, c_shortcut, kernel), ConvParams::conv(channels, channels, kernel),
                     ConvParams::conv(channels, channels, kernel)};
}

void BSMParams::init_kaiming(Rng& rng) {
    w_n.init_kaiming(rng);
    w_m.init_kaiming(rng);
    w_s.init_kaiming(rng);
}

ConcatFusionParams ConcatFusionParams::make(std::size_t c_shortcut, std::size_t channels) {
    return ConcatFusionParams{ConvParams::conv(channels, channels + c_shortcut, 1)};
}

void ConcatFusionParams::init_kaiming(Rng& rng) { mix.init_kaiming(rng); }

namespace {
void check_streams(const Tensor& z, const Tensor& h_prev, std::size_t c_short, std::size_t c) {
    if (z.rank() != 3 || h_prev.rank() != 3 || z.height() != h_prev.height() || z.width() != h_prev.width())
        throw ShapeError("fusion: streams must be spatially equal, got " + shape_str(z.shape()) + " and " + shape_str(h_prev.shape()));
    if (z.channels() != c_short || h_prev.channels() != c)
        throw ShapeError("fusion: channel contract violated by " + shape_str(z.shape()) + " / " + shape_str(h_prev.shape()));
}
}  // namespace

BSMTrace bsm_trace(const Tensor& z, const Tensor& h_prev, const BSMParams& p) {
    check_streams(z, h_prev, p.shortcut_channels(), p.channels());
    const std::size_t pad = p.w_n.kernel() / 2;
    BSMTrace tr;
    tr.n = conv2d(z, p.w_n, 1, pad);
    tr.m = conv2d(h_prev, p.w_m, 1, pad);
    tr.s = sigmoid(conv2d(relu(tr.n + tr.m), p.w_s, 1, pad));
    tr.out = bsm_combine(h_prev, tr.n, tr.s);
    return tr;
}

Tensor bsm_forward(const Tensor& z, const Tensor& h_prev, const BSMParams& p) { return bsm_trace(z, h_prev, p).out; }

Tensor bsm_combine(const Tensor& h_prev, const Tensor& n, const Tensor& s) {
    require_same_shape(h_prev, n, "bsm_combine");
    require_same_shape(h_prev, s, "bsm_combine");
    Tensor y(h_prev.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(s[i] >= 0.0 && s[i] <= 1.0)) throw std::domain_error("bsm_combine: gate value outside [0, 1]");
        y[i] = h_prev[i] * (1.0 - s[i]) + n[i] * s[i];
    }
    return y;
}

Tensor concat_fusion_forward(const Tensor& z, const Tensor& h_prev, const ConcatFusionParams& p) {
    check_streams(z, h_prev, p.mix.weight.dim(1) - p.mix.weight.dim(0), p.mix.weight.dim(0));
    return conv2d(concat_channels(h_prev, z), p.mix, 1, 0);
}

namespace ad {

ConvVars bind(Bindings& b, const ConvParams& p) { return {b(p.weight), b(p.bias)}; }

BSMVars bind(Bindings& b, const BSMParams& p) { return {bind(b, p.w_n), bind(b, p.w_m), bind(b, p.w_s)}; }

Var bsm(Tape& t, Var z, Var h_prev, const BSMVars& p, std::optional<double> gate_override) {
    const Tensor& wn = t.value(p.w_n.weight);
    check_streams(t.value(z), t.value(h_prev), wn.dim(1), t.value(p.w_m.weight).dim(0));
    const std::size_t pad = wn.dim(2) / 2;
    const Var n = conv2d(t, z, p.w_n.weight, p.w_n.bias, 1, pad);
    const Var m = conv2d(t, h_prev, p.w_m.weight, p.w_m.bias, 1, pad);
    Var s = sigmoid(t, conv2d(t, relu(t, add(t, n, m)), p.w_s.weight, p.w_s.bias, 1, pad));
    if (gate_override) {
        if (!(*gate_override >= 0.0 && *gate_override <= 1.0)) throw std::domain_error("bsm: gate override outside [0, 1]");
        s = t.leaf(Tensor(t.value(s).shape(), *gate_override), false, "gate_override");
    }
    return gated_blend(t, h_prev, n, s);
}

Var concat_fusion(Tape& t, Var z, Var h_prev, const ConvVars& mix) {
    const Tensor& w = t.value(mix.weight);
    check_streams(t.value(z), t.value(h_prev), w.dim(1) - w.dim(0), w.dim(0));
    return conv2d(t, concat_channels(t, h_prev, z), mix.weight, mix.bias, 1, 0);
}

}  // namespace ad
}  // namespace pnerv
