#pragma once

// The fixed set of operations the decoder is built from. Each op has a plain
// tensor form (namespace pnerv) and a recorded form (namespace pnerv::ad) that
// appends a node with its backward rule to a Tape.

#include "pnerv/autodiff.hpp"
#include "pnerv/kernels.hpp"
#include "pnerv/tensor.hpp"

namespace pnerv {

/// Convolution weights (out x in x k x k) and per-output-channel bias.
///
/// For transposed convolutions the weight keeps the layout of the convolution
/// it is the adjoint of, i.e. (in x out x k x k), and the bias has dim(1)
/// entries.
struct ConvParams {
    Tensor weight;
    Tensor bias;

    /// Regular convolution; rejects even kernel sizes.
    static ConvParams conv(std::size_t out_channels, std::size_t in_channels, std::size_t k);
    static ConvParams transposed(std::size_t in_channels, std::size_t out_channels, std::size_t k);

    std::size_t kernel() const { return weight.dim(2); }
    void init_kaiming(Rng& rng);
};

struct BatchNormState {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormState(std::size_t channels);
    std::size_t channels() const { return gamma.size(); }
};

constexpr double kGeluCoeff = 0.044715;

double gelu_scalar(double x);
double gelu_grad_scalar(double x);
double sigmoid_scalar(double x);

Tensor conv2d(const Tensor& x, const ConvParams& p, std::size_t stride, std::size_t padding);
Tensor deconv2d(const Tensor& x, const ConvParams& p, std::size_t stride, std::size_t padding = 0);
Tensor pixel_shuffle(const Tensor& x, std::size_t r);
Tensor pixel_unshuffle(const Tensor& x, std::size_t r);
Tensor bilinear_upsample(const Tensor& x, std::size_t r);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Per-channel normalization over H x W. In training mode the running stats
/// of `state` are updated with the unbiased spatial variance.
Tensor batch_norm2d(const Tensor& x, BatchNormState& state, bool training);
Tensor concat_channels(const Tensor& a, const Tensor& b);

namespace ad {

Var conv2d(Tape& t, Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);
Var deconv2d(Tape& t, Var x, Var weight, Var bias, std::size_t stride, std::size_t padding = 0);
Var pixel_shuffle(Tape& t, Var x, std::size_t r);
Var bilinear_upsample(Tape& t, Var x, std::size_t r);
Var relu(Tape& t, Var x);
Var gelu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
/// Training-mode batch norm with a batch of one frame: statistics are taken
/// over H x W of the input itself. `running` (optional) receives the
/// running-stat update.
Var batch_norm2d(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5, BatchNormState* running = nullptr);
/// Eval-mode batch norm against frozen running statistics.
Var batch_norm2d_eval(Tape& t, Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                      double eps = 1e-5);
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
/// h * (1 - s) + n * s, elementwise.
Var gated_blend(Tape& t, Var h, Var n, Var s);
Var concat_channels(Tape& t, Var a, Var b);
/// Scalar sum of all entries.
Var sum(Tape& t, Var x);
/// Scalar <x, w> for a constant weight tensor.
Var weighted_sum(Tape& t, Var x, const Tensor& w);
/// Mean squared error against a constant target.
Var mse(Tape& t, Var pred, const Tensor& target);

}  // namespace ad
}  // namespace pnerv
