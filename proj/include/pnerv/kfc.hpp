#pragma once

// Kronecker fully-connected upscaling.
//
// Each channel i is mapped by a pair of small matrices,
//
//   Z_i = K1_i * X_i * K2_i + b_c[i] * (b_h b_w^T),
//
// with K1_i: H_out x H_in and K2_i: W_in x W_out. Under row-major
// vectorization this is the dense map (K1_i kron K2_i^T) * vec(X_i), at a
// cost of H_out*H_in + W_in*W_out weights instead of (H_out*W_out)*(H_in*W_in).

#include "pnerv/autodiff.hpp"
#include "pnerv/grad_check.hpp"
#include "pnerv/tensor.hpp"

#include <cstdint>
#include <string>

namespace pnerv {

struct KFcParams {
    Tensor k1;   // C x H_out x H_in
    Tensor k2;   // C x W_in x W_out
    Tensor b_c;  // C
    Tensor b_h;  // H_out
    Tensor b_w;  // W_out

    /// All-zero parameters of the given geometry.
    static KFcParams zeros(std::size_t channels, std::size_t h_in, std::size_t w_in, std::size_t h_out, std::size_t w_out);

    std::size_t channels() const { return k1.dim(0); }
    std::size_t h_out() const { return k1.dim(1); }
    std::size_t h_in() const { return k1.dim(2); }
    std::size_t w_in() const { return k2.dim(1); }
    std::size_t w_out() const { return k2.dim(2); }

    /// Kaiming fan-out kernels; b_c = 0 and b_h = b_w = 1 so the bias starts
    /// at zero but every factor still receives gradient.
    void init_kaiming(Rng& rng);
    /// Throws ShapeError if the five tensors disagree.
    void validate() const;
};

Tensor kfc_forward(const Tensor& x, const KFcParams& p);
/// out(c, h, w) = b_c[c] * b_h[h] * b_w[w].
Tensor kfc_bias(const Tensor& b_c, const Tensor& b_h, const Tensor& b_w);
/// Dense (H_out*W_out) x (H_in*W_in) matrix K1 kron K2^T for one channel,
/// row-major vectorization on both sides.
Tensor kfc_dense_oracle(const KFcParams& p, std::size_t channel);

namespace ad {
struct KFcVars {
    Var k1, k2, b_c, b_h, b_w;
};
KFcVars bind(Bindings& b, const KFcParams& p);
Var kfc(Tape& t, Var x, const KFcVars& p);
}  // namespace ad

enum class OperatorKind { KFc, PixelShuffle, Deconv, Bilinear };

std::string to_string(OperatorKind k);
/// Accepts "kfc", "pixelshuffle", "deconv", "bilinear" (case-insensitive).
OperatorKind operator_kind_from_string(const std::string& s);

struct OperatorBudget {
    OperatorKind kind = OperatorKind::KFc;
    std::uint64_t kernel_params = 0;
    std::uint64_t bias_params = 0;
    std::uint64_t macs = 0;
    std::uint64_t adds = 0;

    std::uint64_t total_params() const { return kernel_params + bias_params; }
    std::uint64_t flops() const { return 2 * macs + adds; }
};

/// Geometry of an upscaling step (C, H_in, W_in) -> (C, H_out, W_out).
/// `kernel` is the conv kernel in front of a PixelShuffle; `rate` the integer
/// upscale factor used by PixelShuffle, Deconv and Bilinear.
struct UpscaleShape {
    std::uint64_t channels = 0;
    std::uint64_t h_in = 0, w_in = 0;
    std::uint64_t h_out = 0, w_out = 0;
    std::uint64_t kernel = 1;
    std::uint64_t rate = 1;
};

OperatorBudget kfc_param_count(std::uint64_t c, std::uint64_t h_in, std::uint64_t w_in, std::uint64_t h_out, std::uint64_t w_out);
/// The conv feeding a PixelShuffle expands C -> C*r^2 channels.
OperatorBudget pixelshuffle_param_count(std::uint64_t c, std::uint64_t k, std::uint64_t r);
/// Parameters and multiply-add counts for one operator at the given shape.
OperatorBudget operator_flops(OperatorKind kind, const UpscaleShape& s);

}  // namespace pnerv
