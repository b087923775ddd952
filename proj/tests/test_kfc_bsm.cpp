#include "pnerv/bsm.hpp"
#include "pnerv/kfc.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace pnerv;

namespace {

KFcParams random_kfc(std::size_t c, std::size_t hi, std::size_t wi, std::size_t ho, std::size_t wo, Rng& rng) {
    KFcParams p = KFcParams::zeros(c, hi, wi, ho, wo);
    p.k1 = uniform(p.k1.shape(), rng);
    p.k2 = uniform(p.k2.shape(), rng);
    p.b_c = uniform(p.b_c.shape(), rng);
    p.b_h = uniform(p.b_h.shape(), rng);
    p.b_w = uniform(p.b_w.shape(), rng);
    return p;
}

// Dense oracle applied to one channel, plus the rank-1 bias.
Tensor dense_forward(const Tensor& x, const KFcParams& p) {
    Tensor out = Tensor::chw(p.channels(), p.h_out(), p.w_out());
    const Tensor bias = kfc_bias(p.b_c, p.b_h, p.b_w);
    const std::size_t n_in = p.h_in() * p.w_in(), n_out = p.h_out() * p.w_out();
    for (std::size_t c = 0; c < p.channels(); ++c) {
        const Tensor m = kfc_dense_oracle(p, c);
        const auto xc = x.channel(c);
        auto oc = out.channel(c);
        const auto bc = bias.channel(c);
        for (std::size_t r = 0; r < n_out; ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n_in; ++k) acc += m[r * n_in + k] * xc[k];
            oc[r] = acc + bc[r];
        }
    }
    return out;
}

// Straightforward K1 * X * K2 evaluation that counts every multiply-add.
struct CountingKFc {
    std::uint64_t macs = 0, adds = 0;
    Tensor operator()(const Tensor& x, const KFcParams& p) {
        const std::size_t C = p.channels(), Hi = p.h_in(), Wi = p.w_in(), Ho = p.h_out(), Wo = p.w_out();
        Tensor out = Tensor::chw(C, Ho, Wo);
        std::vector<double> tmp(Ho * Wi);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t h = 0; h < Ho; ++h)
                for (std::size_t w = 0; w < Wi; ++w) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < Hi; ++k, ++macs) acc += p.k1[(c * Ho + h) * Hi + k] * x(c, k, w);
                    tmp[h * Wi + w] = acc;
                }
            for (std::size_t h = 0; h < Ho; ++h)
                for (std::size_t w = 0; w < Wo; ++w) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < Wi; ++k, ++macs) acc += tmp[h * Wi + k] * p.k2[(c * Wi + k) * Wo + w];
                    out(c, h, w) = acc + p.b_c[c] * p.b_h[h] * p.b_w[w];
                    ++adds;
                }
        }
        return out;
    }
};

}  // namespace

TEST(KFc, ScalarUnrolling) {
    KFcParams p = KFcParams::zeros(1, 1, 1, 1, 1);
    const double a = 0.7, b = -1.3, v = 0.4, beta = 0.9;
    p.k1[0] = a;
    p.k2[0] = b;
    p.b_c[0] = p.b_h[0] = p.b_w[0] = beta;
    const Tensor y = kfc_forward(Tensor({1, 1, 1}, std::vector<double>{v}), p);
    EXPECT_NEAR(y[0], a * v * b + beta * beta * beta, 1e-15);
}

TEST(KFc, BiasOnly) {
    KFcParams p = KFcParams::zeros(2, 2, 3, 4, 1);
    p.b_c = Tensor::vec({1.0, 2.0});
    p.b_h = Tensor::vec(4, 1.0);
    p.b_w = Tensor::vec({1.0});
    Rng rng(1);
    const Tensor y = kfc_forward(uniform({2, 2, 3}, rng), p);
    for (double v : y.channel(0)) EXPECT_EQ(v, 1.0);
    for (double v : y.channel(1)) EXPECT_EQ(v, 2.0);
}

TEST(KFc, KroneckerEquivalenceRandomShapes) {
    Rng rng(42);
    std::uniform_int_distribution<std::size_t> dim(1, 6), ch(1, 4);
    for (int trial = 0; trial < 100; ++trial) {
        const KFcParams p = random_kfc(ch(rng), dim(rng), dim(rng), dim(rng), dim(rng), rng);
        const Tensor x = uniform({p.channels(), p.h_in(), p.w_in()}, rng);
        EXPECT_LE(max_abs_diff(kfc_forward(x, p), dense_forward(x, p)), 1e-10);
    }
}

TEST(KFc, DenseOracleSmallCases) {
    KFcParams p = KFcParams::zeros(1, 1, 1, 1, 1);
    p.k1[0] = 3.0;
    p.k2[0] = -2.0;
    const Tensor m = kfc_dense_oracle(p, 0);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0], -6.0);

    KFcParams id = KFcParams::zeros(1, 3, 2, 3, 2);
    for (std::size_t i = 0; i < 3; ++i) id.k1[i * 3 + i] = 1.0;
    for (std::size_t i = 0; i < 2; ++i) id.k2[i * 2 + i] = 1.0;
    const Tensor d = kfc_dense_oracle(id, 0);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(d[r * 6 + c], r == c ? 1.0 : 0.0);
}

TEST(KFc, Affinity) {
    Rng rng(3);
    const KFcParams p = random_kfc(3, 2, 3, 4, 5, rng);
    const Tensor x = uniform({3, 2, 3}, rng), y = uniform({3, 2, 3}, rng);
    const Tensor f0 = kfc_forward(Tensor::chw(3, 2, 3), p);
    const Tensor lhs = kfc_forward(x + y, p) - f0;
    const Tensor rhs = (kfc_forward(x, p) - f0) + (kfc_forward(y, p) - f0);
    EXPECT_LE(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(KFc, BiasIsRankOnePerChannel) {
    Rng rng(4);
    const Tensor bc = uniform({3}, rng), bh = uniform({5}, rng), bw = uniform({6}, rng);
    const Tensor b = kfc_bias(bc, bh, bw);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t h0 = 0; h0 < 5; ++h0)
            for (std::size_t h1 = h0 + 1; h1 < 5; ++h1)
                for (std::size_t w0 = 0; w0 < 6; ++w0)
                    for (std::size_t w1 = w0 + 1; w1 < 6; ++w1)
                        EXPECT_LE(std::abs(b(c, h0, w0) * b(c, h1, w1) - b(c, h0, w1) * b(c, h1, w0)), 1e-10);
    // Slices are proportional with ratio b_c[i] / b_c[j].
    for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 6; ++w) EXPECT_NEAR(b(0, h, w) * bc[1], b(1, h, w) * bc[0], 1e-14);

    const Tensor ones = kfc_bias(Tensor::vec(2, 1.0), Tensor::vec(3, 1.0), Tensor::vec(4, 1.0));
    for (double v : ones.data()) EXPECT_EQ(v, 1.0);
    const Tensor z = kfc_bias(Tensor::vec({0.0, 1.0}), bh, bw);
    for (double v : z.channel(0)) EXPECT_EQ(v, 0.0);
}

TEST(KFc, ShapeErrors) {
    const KFcParams p = KFcParams::zeros(2, 2, 3, 4, 5);
    EXPECT_THROW(kfc_forward(Tensor::chw(2, 3, 3), p), ShapeError);
    KFcParams bad = p;
    bad.b_h = Tensor::vec(3);
    EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(KFcBudget, PaperShapes) {
    const OperatorBudget k = kfc_param_count(16, 2, 4, 320, 640);
    EXPECT_EQ(k.kernel_params, 51200u);
    EXPECT_EQ(k.total_params(), 52176u);
    const OperatorBudget one = kfc_param_count(1, 1, 1, 1, 1);
    EXPECT_EQ(one.kernel_params, 2u);
    EXPECT_EQ(one.total_params(), 5u);

    EXPECT_EQ(pixelshuffle_param_count(16, 1, 160).total_params(), 6963200u);
    EXPECT_EQ(pixelshuffle_param_count(16, 3, 160).total_params(), 59392000u);
    EXPECT_EQ(pixelshuffle_param_count(1, 1, 1).total_params(), 2u);

    const double ratio = static_cast<double>(k.total_params()) / static_cast<double>(pixelshuffle_param_count(16, 1, 160).total_params());
    EXPECT_LT(ratio, 0.0075);
}

TEST(KFcBudget, FlopFormulas) {
    const OperatorBudget tiny = operator_flops(OperatorKind::KFc, {1, 1, 1, 1, 1, 1, 1});
    EXPECT_EQ(tiny.macs, 2u);
    EXPECT_EQ(tiny.adds, 1u);
    const OperatorBudget ps = operator_flops(OperatorKind::PixelShuffle, {16, 4, 4, 8, 8, 1, 2});
    EXPECT_EQ(ps.macs, 16384u);
}

TEST(KFcBudget, MatchesInstrumentedForward) {
    Rng rng(7);
    for (const UpscaleShape s : {UpscaleShape{16, 2, 4, 320, 640, 1, 1}, UpscaleShape{3, 2, 3, 4, 5, 1, 1}}) {
        const KFcParams p = random_kfc(s.channels, s.h_in, s.w_in, s.h_out, s.w_out, rng);
        const Tensor x = uniform({s.channels, s.h_in, s.w_in}, rng);
        CountingKFc counter;
        const Tensor y = counter(x, p);
        EXPECT_LE(max_abs_diff(y, kfc_forward(x, p)), 1e-12);
        const OperatorBudget b = operator_flops(OperatorKind::KFc, s);
        EXPECT_EQ(b.macs, counter.macs);
        EXPECT_EQ(b.adds, counter.adds);
    }
}

TEST(KFcBudget, PixelShuffleMatchesInstrumentedConv) {
    // Every output element of the expanding conv costs C * k^2 MACs.
    const std::uint64_t C = 16, k = 1, r = 2, H = 4, W = 4;
    std::uint64_t macs = 0;
    for (std::uint64_t co = 0; co < C * r * r; ++co)
        for (std::uint64_t p = 0; p < H * W; ++p)
            for (std::uint64_t ci = 0; ci < C; ++ci) macs += k * k;
    EXPECT_EQ(operator_flops(OperatorKind::PixelShuffle, {C, H, W, H * r, W * r, k, r}).macs, macs);
}

TEST(KFcBudget, OperatorNames) {
    EXPECT_EQ(operator_kind_from_string("KFC"), OperatorKind::KFc);
    EXPECT_EQ(operator_kind_from_string("pixelshuffle"), OperatorKind::PixelShuffle);
    EXPECT_THROW(operator_kind_from_string("lstm"), std::invalid_argument);
}

// --- BSM --------------------------------------------------------------------

TEST(BSM, ZeroWeightsHalveMainstream) {
    const BSMParams p = BSMParams::make(2, 3, 3);
    Rng rng(1);
    const Tensor z = uniform({2, 4, 5}, rng), h = uniform({3, 4, 5}, rng);
    const Tensor y = bsm_forward(z, h, p);
    EXPECT_LE(max_abs_diff(y, h * 0.5), 0.0);
}

TEST(BSM, SaturatedGateKeepsMainstream) {
    BSMParams p = BSMParams::make(2, 3, 3);
    p.w_s.bias.fill(-20.0);
    Rng rng(2);
    const Tensor z = uniform({2, 4, 5}, rng), h = uniform({3, 4, 5}, rng);
    const BSMTrace tr = bsm_trace(z, h, p);
    for (double s : tr.s.data()) EXPECT_LT(s, 1e-8);
    EXPECT_LT(max_abs_diff(tr.out, h), 1e-7 * max_abs(h));
}

TEST(BSM, MatchesStepByStepComposition) {
    Rng rng(3);
    for (std::size_t k : {1u, 3u, 5u}) {
        BSMParams p = BSMParams::make(2, 3, k);
        p.init_kaiming(rng);
        p.w_n.bias = uniform({3}, rng);
        p.w_s.bias = uniform({3}, rng);
        const Tensor z = uniform({2, 6, 7}, rng), h = uniform({3, 6, 7}, rng);
        const std::size_t pad = k / 2;
        const Tensor n = conv2d(z, p.w_n, 1, pad);
        const Tensor m = conv2d(h, p.w_m, 1, pad);
        const Tensor s = sigmoid(conv2d(relu(n + m), p.w_s, 1, pad));
        Tensor expect(h.shape());
        for (std::size_t i = 0; i < h.size(); ++i) expect[i] = h[i] * (1.0 - s[i]) + n[i] * s[i];
        EXPECT_LE(max_abs_diff(bsm_forward(z, h, p), expect), 1e-12);
    }
}

TEST(BSM, GateIsStrictlyInsideUnitInterval) {
    Rng rng(4);
    BSMParams p = BSMParams::make(2, 3, 3);
    p.init_kaiming(rng);
    const BSMTrace tr = bsm_trace(uniform({2, 5, 5}, rng, -3, 3), uniform({3, 5, 5}, rng, -3, 3), p);
    for (double s : tr.s.data()) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
}

TEST(BSM, CombineEndpointsAndMidpoint) {
    Rng rng(5);
    const Tensor h = uniform({2, 3, 3}, rng), n = uniform({2, 3, 3}, rng);
    EXPECT_EQ(bsm_combine(h, n, Tensor(h.shape(), 0.0)), h);
    EXPECT_EQ(bsm_combine(h, n, Tensor(h.shape(), 1.0)), n);
    const Tensor mid = bsm_combine(h, n, Tensor(h.shape(), 0.5));
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(mid[i], 0.5 * (h[i] + n[i]), 1e-15);
}

TEST(BSM, CombineIsElementwiseBounded) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor h = uniform({2, 4, 4}, rng), n = uniform({2, 4, 4}, rng), s = uniform({2, 4, 4}, rng, 0.0, 1.0);
        const Tensor y = bsm_combine(h, n, s);
        for (std::size_t i = 0; i < y.size(); ++i) {
            EXPECT_GE(y[i], std::min(h[i], n[i]) - 1e-15);
            EXPECT_LE(y[i], std::max(h[i], n[i]) + 1e-15);
        }
    }
}

TEST(BSM, CombineRejectsGateOutOfRange) {
    const Tensor h = Tensor::chw(1, 2, 2);
    EXPECT_THROW(bsm_combine(h, h, Tensor(h.shape(), 1.5)), std::domain_error);
    EXPECT_THROW(bsm_combine(h, h, Tensor(h.shape(), -0.1)), std::domain_error);
    EXPECT_THROW(bsm_combine(h, Tensor::chw(1, 2, 3), Tensor(h.shape(), 0.5)), ShapeError);
}

TEST(BSM, MainstreamWeightsOnlyReachOutputThroughGate) {
    // With n and s held fixed, changing W_m cannot move the combine result.
    Rng rng(7);
    BSMParams p = BSMParams::make(2, 3, 3);
    p.init_kaiming(rng);
    const Tensor z = uniform({2, 4, 4}, rng), h = uniform({3, 4, 4}, rng);
    const BSMTrace a = bsm_trace(z, h, p);
    BSMParams q = p;
    q.w_m.weight = uniform(q.w_m.weight.shape(), rng);
    const BSMTrace b = bsm_trace(z, h, q);
    EXPECT_EQ(a.n, b.n);
    EXPECT_NE(a.m, b.m);
    EXPECT_EQ(bsm_combine(h, a.n, a.s), a.out);
}

TEST(BSM, ShapeMismatch) {
    const BSMParams p = BSMParams::make(2, 3, 3);
    EXPECT_THROW(bsm_forward(Tensor::chw(2, 4, 4), Tensor::chw(3, 4, 5), p), ShapeError);
    EXPECT_THROW(bsm_forward(Tensor::chw(1, 4, 4), Tensor::chw(3, 4, 4), p), ShapeError);
}

TEST(ConcatFusion, IsOneByOneConvOverConcatenation) {
    Rng rng(8);
    ConcatFusionParams c = ConcatFusionParams::make(2, 3);
    c.init_kaiming(rng);
    const Tensor z = uniform({2, 4, 4}, rng), h = uniform({3, 4, 4}, rng);
    const Tensor expect = conv2d(concat_channels(h, z), c.mix, 1, 0);
    const Tensor alt = conv2d(concat_channels(z, h), c.mix, 1, 0);
    const Tensor got = concat_fusion_forward(z, h, c);
    EXPECT_TRUE(max_abs_diff(got, expect) <= 1e-12 || max_abs_diff(got, alt) <= 1e-12);
}
