#include "pnerv/autodiff.hpp"
#include "pnerv/gradcheck_suite.hpp"
#include "pnerv/kernels.hpp"
#include "pnerv/ops.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace pnerv;

namespace {

// Direct quadruple-sum convolution, written independently of the library.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t s, std::size_t p) {
    const std::size_t co_n = w.dim(0), ci_n = w.dim(1), k = w.dim(2);
    const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
    const std::size_t Ho = (x.height() + 2 * p - k) / s + 1, Wo = (x.width() + 2 * p - k) / s + 1;
    Tensor y = Tensor::chw(co_n, Ho, Wo);
    for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t oh = 0; oh < Ho; ++oh)
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                double acc = b[co];
                for (std::size_t ci = 0; ci < ci_n; ++ci)
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t c = 0; c < k; ++c) {
                            const long ih = static_cast<long>(oh * s + a) - static_cast<long>(p);
                            const long iw = static_cast<long>(ow * s + c) - static_cast<long>(p);
                            if (ih >= 0 && iw >= 0 && ih < H && iw < W) acc += w[((co * ci_n + ci) * k + a) * k + c] * x(ci, ih, iw);
                        }
                y(co, oh, ow) = acc;
            }
    return y;
}

}  // namespace

TEST(Tensor, ShapeAndLayout) {
    Tensor t = Tensor::chw(2, 3, 4);
    EXPECT_EQ(t.size(), 24u);
    t(1, 2, 3) = 7.0;
    EXPECT_EQ(t[(1 * 3 + 2) * 4 + 3], 7.0);
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    EXPECT_THROW(require_same_shape(Tensor::chw(1, 2, 2), Tensor::chw(1, 2, 3), "t"), ShapeError);
}

TEST(Tensor, KaimingFanOutStd) {
    Rng rng(3);
    const Tensor w = kaiming_normal_fan_out({64, 8, 3, 3}, rng);
    double ss = 0.0;
    for (double v : w.data()) ss += v * v;
    const double std_emp = std::sqrt(ss / static_cast<double>(w.size()));
    EXPECT_NEAR(std_emp, std::sqrt(2.0 / (64.0 * 9.0)), 0.005);
}

TEST(Tensor, SeededDrawsAreBitIdentical) {
    Rng a(11), b(11);
    EXPECT_EQ(uniform({3, 4, 5}, a), uniform({3, 4, 5}, b));
}

// --- conv2d ---------------------------------------------------------------

TEST(Conv2d, IdentityKernel) {
    ConvParams p = ConvParams::conv(1, 1, 1);
    p.weight[0] = 1.0;
    const Tensor y = conv2d(Tensor({1, 1, 1}, std::vector<double>{0.37}), p, 1, 0);
    EXPECT_EQ(y[0], 0.37);
}

TEST(Conv2d, AllOnesOnConstantGivesNineC) {
    ConvParams p = ConvParams::conv(1, 1, 3);
    p.weight.fill(1.0);
    const Tensor y = conv2d(Tensor::chw(1, 5, 6, 0.25), p, 1, 1);
    for (std::size_t h = 1; h < 4; ++h)
        for (std::size_t w = 1; w < 5; ++w) EXPECT_DOUBLE_EQ(y(0, h, w), 9 * 0.25);
    EXPECT_DOUBLE_EQ(y(0, 0, 0), 4 * 0.25);
}

TEST(Conv2d, MatchesNaiveOracle) {
    Rng rng(5);
    for (std::size_t stride : {1u, 2u}) {
        ConvParams p = ConvParams::conv(3, 2, 3);
        p.weight = uniform(p.weight.shape(), rng);
        p.bias = uniform(p.bias.shape(), rng);
        const Tensor x = uniform({2, 4, 4}, rng);
        EXPECT_LE(max_abs_diff(conv2d(x, p, stride, 1), naive_conv(x, p.weight, p.bias, stride, 1)), 1e-12);
    }
}

TEST(Conv2d, OutputDims) {
    EXPECT_EQ(kernels::conv_out_dim(7, 3, {2, 1}), 4u);
    EXPECT_EQ(kernels::conv_out_dim(5, 5, {1, 0}), 1u);
    EXPECT_THROW(kernels::conv_out_dim(2, 5, {1, 0}), ShapeError);
}

TEST(Conv2d, RejectsEvenKernelAndChannelMismatch) {
    EXPECT_THROW(ConvParams::conv(1, 1, 2), std::invalid_argument);
    const ConvParams p = ConvParams::conv(2, 3, 3);
    EXPECT_THROW(conv2d(Tensor::chw(2, 4, 4), p, 1, 1), ShapeError);
}

TEST(Kernels, SerialAndParallelAgreeExactly) {
    Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t ci = 1 + rng() % 5, co = 1 + rng() % 5, k = (rng() % 2) ? 3 : 1, s = 1 + rng() % 3;
        const std::size_t p = rng() % (k / 2 + 1);
        const std::size_t H = k + rng() % 8, W = k + rng() % 8;
        const Tensor x = uniform({ci, H, W}, rng), w = uniform({co, ci, k, k}, rng), b = uniform({co}, rng);
        const kernels::ConvGeometry g{s, p};
        const Tensor y = kernels::serial::conv2d_forward(x, w, &b, g);
        EXPECT_EQ(y, kernels::omp::conv2d_forward(x, w, &b, g));
        const Tensor gy = uniform(y.shape(), rng);
        EXPECT_EQ(kernels::serial::conv2d_backward_input(gy, w, g, x.shape()), kernels::omp::conv2d_backward_input(gy, w, g, x.shape()));
        EXPECT_EQ(kernels::serial::conv2d_backward_weight(x, gy, k, g), kernels::omp::conv2d_backward_weight(x, gy, k, g));
    }
}

// --- deconv ---------------------------------------------------------------

TEST(Deconv2d, IdentityAndSingleTap) {
    ConvParams id = ConvParams::transposed(1, 1, 1);
    id.weight[0] = 1.0;
    Rng rng(1);
    const Tensor x = uniform({1, 3, 4}, rng);
    EXPECT_EQ(deconv2d(x, id, 1), x);

    ConvParams ones = ConvParams::transposed(1, 1, 2);
    ones.weight.fill(1.0);
    const Tensor y = deconv2d(Tensor({1, 1, 1}, std::vector<double>{0.6}), ones, 2);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    for (double v : y.data()) EXPECT_EQ(v, 0.6);
}

TEST(Deconv2d, AdjointOfConv) {
    Rng rng(9);
    for (const auto& [k, s, p] : {std::tuple{3u, 1u, 1u}, std::tuple{3u, 2u, 1u}, std::tuple{1u, 1u, 0u}}) {
        // Transposed weight layout is (in, out, k, k); conv weight (out, in, k, k).
        const Tensor w = uniform({3, 2, k, k}, rng);
        ConvParams conv = ConvParams::conv(3, 2, k);
        conv.weight = w;
        ConvParams tr = ConvParams::transposed(3, 2, k);
        tr.weight = w;
        const Tensor x = uniform({2, 7, 7}, rng);
        const Tensor cx = conv2d(x, conv, s, p);
        const Tensor y = uniform(cx.shape(), rng);
        const Tensor ty = deconv2d(y, tr, s, p);  // 7 is reachable from 4 under k=3, s=2, p=1
        ASSERT_EQ(ty.shape(), x.shape());
        EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-10);
    }
}

TEST(Deconv2d, MatchesConvInputGradient) {
    Rng rng(21);
    const Tensor w = uniform({3, 2, 2, 2}, rng);
    ConvParams tr = ConvParams::transposed(3, 2, 2);
    tr.weight = w;
    const Tensor y = uniform({3, 3, 4}, rng);
    const Tensor oracle = kernels::serial::conv2d_backward_input(y, w, {2, 0}, {2, 6, 8});
    EXPECT_LE(max_abs_diff(deconv2d(y, tr, 2), oracle), 1e-12);
}

// --- pixel shuffle / bilinear -------------------------------------------------

TEST(PixelShuffle, DefinitionUnrolled) {
    const Tensor x({4, 1, 1}, std::vector<double>{1, 2, 3, 4});
    const Tensor y = pixel_shuffle(x, 2);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    EXPECT_EQ(y.storage(), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_THROW(pixel_shuffle(Tensor::chw(3, 1, 1), 2), ShapeError);
}

TEST(PixelShuffle, IdentityAndInverse) {
    Rng rng(2);
    const Tensor x = uniform({8, 3, 5}, rng);
    EXPECT_EQ(pixel_shuffle(x, 1), x);
    const Tensor y = pixel_shuffle(x, 2);
    EXPECT_EQ(pixel_unshuffle(y, 2), x);
    std::vector<double> a = x.storage(), b = y.storage();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
}

TEST(Bilinear, ConstantsAndIdentity) {
    Rng rng(4);
    const Tensor c = Tensor::chw(2, 3, 4, 0.3);
    const Tensor up = bilinear_upsample(c, 3);
    ASSERT_EQ(up.shape(), (Shape{2, 9, 12}));
    for (double v : up.data()) EXPECT_NEAR(v, 0.3, 1e-15);
    const Tensor x = uniform({2, 3, 4}, rng);
    EXPECT_EQ(bilinear_upsample(x, 1), x);
}

TEST(Bilinear, HandEvaluatedTwoPixel) {
    // Output w samples source at max(0, (w + 0.5) / 2 - 0.5): 0, 0.25, 0.75, 1.25 -> clamped to 1.
    const Tensor y = bilinear_upsample(Tensor({1, 1, 2}, std::vector<double>{0.0, 1.0}), 2);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 4}));
    const double expect[4] = {0.0, 0.25, 0.75, 1.0};
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t w = 0; w < 4; ++w) EXPECT_NEAR(y(0, h, w), expect[w], 1e-15);
}

// --- activations ------------------------------------------------------------

TEST(Activations, ReferenceValues) {
    EXPECT_EQ(gelu_scalar(0.0), 0.0);
    EXPECT_EQ(sigmoid_scalar(0.0), 0.5);
    EXPECT_EQ(relu(Tensor::vec({-1.0}))[0], 0.0);
    const double g1 = 0.5 * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (1.0 + 0.044715)));
    EXPECT_NEAR(gelu_scalar(1.0), g1, 1e-15);
}

TEST(Activations, SigmoidSymmetryAndRange) {
    Rng rng(8);
    const Tensor x = uniform({200}, rng, -30.0, 30.0);
    const Tensor a = sigmoid(x), b = sigmoid(x * -1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(a[i] + b[i], 1.0, 1e-15);
        EXPECT_GT(a[i], 0.0);
        EXPECT_LT(a[i], 1.0);
    }
}

TEST(Activations, Monotonicity) {
    double prev_r = -1, prev_s = -1, prev_g = 1e9;
    for (int i = -400; i <= 400; ++i) {
        const double x = i / 100.0;
        const double r = relu(Tensor::vec({x}))[0], s = sigmoid_scalar(x), g = gelu_scalar(x);
        EXPECT_GE(r, prev_r);
        EXPECT_GE(s, prev_s);
        if (x > -0.75) {
            EXPECT_GE(g, prev_g - 1e-15);
        }
        prev_r = r;
        prev_s = s;
        prev_g = g;
    }
}

// --- batch norm -------------------------------------------------------------

TEST(BatchNorm, TrainingNormalizesPerChannel) {
    Rng rng(6);
    const Tensor x = uniform({3, 5, 7}, rng, -2.0, 5.0);
    BatchNormState st(3);
    const Tensor y = batch_norm2d(x, st, true);
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0.0, v = 0.0;
        for (double e : y.channel(c)) m += e;
        m /= 35.0;
        for (double e : y.channel(c)) v += (e - m) * (e - m);
        v /= 35.0;
        EXPECT_LT(std::abs(m), 1e-9);
        EXPECT_NEAR(v, 1.0, 1e-4);  // eps = 1e-5 shrinks the variance slightly
    }
}

TEST(BatchNorm, ConstantChannelGivesZeros) {
    BatchNormState st(1);
    const Tensor y = batch_norm2d(Tensor::chw(1, 4, 4, 3.5), st, true);
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, RunningStatsAndEvalAffineMap) {
    Rng rng(12);
    BatchNormState st(2);
    const Tensor x = uniform({2, 4, 4}, rng);
    batch_norm2d(x, st, true);
    double mean0 = 0.0;
    for (double e : x.channel(0)) mean0 += e;
    mean0 /= 16.0;
    EXPECT_NEAR(st.running_mean[0], 0.1 * mean0, 1e-15);

    st.gamma = Tensor::vec({1.5, -0.5});
    st.beta = Tensor::vec({0.2, 0.1});
    st.running_mean = Tensor::vec({0.3, -0.1});
    st.running_var = Tensor::vec({2.0, 0.5});
    const Tensor z = uniform({2, 3, 3}, rng);
    const Tensor y = batch_norm2d(z, st, false);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 9; ++i) {
            const double expect = st.gamma[c] * (z.channel(c)[i] - st.running_mean[c]) / std::sqrt(st.running_var[c] + 1e-5) + st.beta[c];
            EXPECT_NEAR(y.channel(c)[i], expect, 1e-14);
        }
}

// --- autodiff ---------------------------------------------------------------

TEST(Autodiff, SumAndSquareGradients) {
    Rng rng(13);
    const Tensor xv = uniform({2, 3, 3}, rng);
    {
        ad::Tape t;
        const ad::Var x = t.leaf(xv);
        t.backward(ad::sum(t, x));
        const Tensor g = t.grad(x);
        for (double e : g.data()) EXPECT_EQ(e, 1.0);
    }
    {
        ad::Tape t;
        const ad::Var x = t.leaf(xv);
        t.backward(ad::sum(t, ad::mul(t, x, x)));
        const Tensor g = t.grad(x);
        for (std::size_t i = 0; i < xv.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * xv[i]);
    }
}

TEST(Autodiff, FanOutAccumulates) {
    ad::Tape t;
    const ad::Var x = t.leaf(Tensor::vec({1.0, 2.0}));
    const ad::Var y = ad::add(t, x, ad::add(t, x, x));
    t.backward(ad::sum(t, y));
    EXPECT_EQ(t.grad(x)[0], 3.0);
    EXPECT_EQ(t.grad(x)[1], 3.0);
}

TEST(Autodiff, TopologicalOrderAndErrors) {
    ad::Tape t;
    const ad::Var x = t.leaf(Tensor::vec({1.0, 2.0}));
    const ad::Var y = ad::relu(t, x);
    for (ad::Var in : t.inputs(y)) EXPECT_LT(in.id, y.id);
    EXPECT_THROW(t.backward(y), std::invalid_argument);  // not scalar
    EXPECT_THROW(t.backward(ad::Var{999}), std::out_of_range);
}

TEST(GradCheck, LinearMapIsExactToRounding) {
    Rng rng(15);
    Tensor x = uniform({3, 2, 2}, rng);
    const Tensor w = uniform({3, 2, 2}, rng);
    const auto rep = grad_check([&](Bindings& b) { return ad::weighted_sum(b.tape(), b(x), w); }, {{"x", &x}});
    EXPECT_TRUE(rep.passed());
    EXPECT_LT(rep.max_rel_error, 1e-8);
}

TEST(GradCheck, DetectsAWrongGradient) {
    // A deliberately wrong backward must be caught.
    Tensor x = Tensor::vec({0.5, -0.25});
    auto f = [&](Bindings& b) {
        ad::Tape& t = b.tape();
        const ad::Var v = b(x);
        const Tensor& xv = t.value(v);
        Tensor y = xv;
        for (auto& e : y.storage()) e = e * e;
        const ad::Var sq = t.record("bad_square", y, {v}, [](const Tensor& g, std::span<Tensor* const> gin) {
            if (gin[0]) *gin[0] += g;  // should be 2x * g
        });
        return ad::sum(t, sq);
    };
    EXPECT_FALSE(grad_check(f, {{"x", &x}}).passed());
}

TEST(GradCheck, FullSuitePasses) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        for (const auto& c : run_gradcheck_suite(seed)) {
            EXPECT_TRUE(c.report.passed()) << c.name << " seed " << seed << " rel " << c.report.max_rel_error;
        }
    }
}
