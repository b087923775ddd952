#pragma once

// Gated fusion of a shortcut stream z into the mainstream feature h_prev:
//
//   n = W_n * z                  (shortcut features)
//   m = W_m * h_prev             (mainstream features)
//   s = sigmoid(W_s * relu(n + m))
//   h = h_prev (1 - s) + n s
//
// m only reaches the output through the gate s.

#include "pnerv/grad_check.hpp"
#include "pnerv/ops.hpp"

#include <optional>

namespace pnerv {

struct BSMParams {
    ConvParams w_n;  // c_shortcut -> C
    ConvParams w_m;  // C -> C
    ConvParams w_s;  // C -> C

    static BSMParams make(std::size_t c_shortcut, std::size_t channels, std::size_t kernel = 3);
    void init_kaiming(Rng& rng);
    std::size_t channels() const { return w_m.weight.dim(0); }
    std::size_t shortcut_channels() const { return w_n.weight.dim(1); }
};

/// Channel concatenation followed by a 1x1 conv back to C channels.
struct ConcatFusionParams {
    ConvParams mix;  // C + c_shortcut -> C, 1x1

    static ConcatFusionParams make(std::size_t c_shortcut, std::size_t channels);
    void init_kaiming(Rng& rng);
};

/// Intermediate streams of one BSM evaluation.
struct BSMTrace {
    Tensor n, m, s, out;
};

BSMTrace bsm_trace(const Tensor& z, const Tensor& h_prev, const BSMParams& p);
Tensor bsm_forward(const Tensor& z, const Tensor& h_prev, const BSMParams& p);
/// h_prev (1 - s) + n s. Throws std::domain_error if any s is outside [0, 1].
Tensor bsm_combine(const Tensor& h_prev, const Tensor& n, const Tensor& s);
Tensor concat_fusion_forward(const Tensor& z, const Tensor& h_prev, const ConcatFusionParams& p);

namespace ad {

struct ConvVars {
    Var weight, bias;
};
ConvVars bind(Bindings& b, const ConvParams& p);

struct BSMVars {
    ConvVars w_n, w_m, w_s;
};
BSMVars bind(Bindings& b, const BSMParams& p);

/// Recorded BSM. When `gate_override` is set the computed gate is replaced by
/// that constant before the combine step.
Var bsm(Tape& t, Var z, Var h_prev, const BSMVars& p, std::optional<double> gate_override = std::nullopt);
Var concat_fusion(Tape& t, Var z, Var h_prev, const ConvVars& mix);

}  // namespace ad
}  // namespace pnerv
