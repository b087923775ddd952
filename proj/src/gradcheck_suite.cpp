#include "pnerv/gradcheck_suite.hpp"

#include "pnerv/bsm.hpp"
#include "pnerv/kfc.hpp"
#include "pnerv/model.hpp"
#include "pnerv/ops.hpp"

#include <cmath>

namespace pnerv {

namespace {

// Values bounded away from zero so ReLU's kink stays outside the FD stencil.
Tensor off_zero(const Shape& s, Rng& rng) {
    Tensor t = uniform(s, rng, 0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.storage())
        if (sign(rng)) v = -v;
    return t;
}

// Projects an op's output onto a fixed random direction to get a scalar.
struct Probe {
    Tensor direction;
    ad::Var operator()(ad::Tape& t, ad::Var y) {
        if (direction.empty()) throw std::logic_error("probe not sized");
        return ad::weighted_sum(t, y, direction);
    }
};

Probe probe_for(const Shape& s, Rng& rng) { return {uniform(s, rng)}; }

void randomize(ConvParams& p, Rng& rng) {
    p.weight = uniform(p.weight.shape(), rng, -0.5, 0.5);
    p.bias = uniform(p.bias.shape(), rng, -0.2, 0.2);
}

}  // namespace

std::vector<SuiteCheck> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<SuiteCheck> out;

    {  // conv2d, stride 1 and stride 2
        for (std::size_t stride : {1u, 2u}) {
            Tensor x = uniform({2, 5, 6}, rng);
            ConvParams p = ConvParams::conv(3, 2, 3);
            randomize(p, rng);
            const Shape ys{3, kernels::conv_out_dim(5, 3, {stride, 1}), kernels::conv_out_dim(6, 3, {stride, 1})};
            Probe pr = probe_for(ys, rng);
            auto f = [&](Bindings& b) {
                return pr(b.tape(), ad::conv2d(b.tape(), b(x), b(p.weight), b(p.bias), stride, 1));
            };
            out.push_back({"conv2d/stride" + std::to_string(stride),
                           grad_check(f, {{"x", &x}, {"weight", &p.weight}, {"bias", &p.bias}}, opt)});
        }
    }
    {  // transposed conv
        Tensor x = uniform({2, 3, 4}, rng);
        ConvParams p = ConvParams::transposed(2, 3, 2);
        randomize(p, rng);
        Probe pr = probe_for({3, 6, 8}, rng);
        auto f = [&](Bindings& b) { return pr(b.tape(), ad::deconv2d(b.tape(), b(x), b(p.weight), b(p.bias), 2, 0)); };
        out.push_back({"deconv2d", grad_check(f, {{"x", &x}, {"weight", &p.weight}, {"bias", &p.bias}}, opt)});
    }
    {  // conv -> pixel shuffle
        Tensor x = uniform({2, 3, 4}, rng);
        ConvParams p = ConvParams::conv(8, 2, 3);
        randomize(p, rng);
        Probe pr = probe_for({2, 6, 8}, rng);
        auto f = [&](Bindings& b) {
            return pr(b.tape(), ad::pixel_shuffle(b.tape(), ad::conv2d(b.tape(), b(x), b(p.weight), b(p.bias), 1, 1), 2));
        };
        out.push_back({"pixel_shuffle", grad_check(f, {{"x", &x}, {"weight", &p.weight}, {"bias", &p.bias}}, opt)});
    }
    {  // bilinear upsampling
        Tensor x = uniform({2, 3, 4}, rng);
        Probe pr = probe_for({2, 9, 12}, rng);
        auto f = [&](Bindings& b) { return pr(b.tape(), ad::bilinear_upsample(b.tape(), b(x), 3)); };
        out.push_back({"bilinear_upsample", grad_check(f, {{"x", &x}}, opt)});
    }
    {  // batch norm over one frame
        Tensor x = uniform({3, 4, 5}, rng);
        Tensor gamma = uniform({3}, rng, 0.5, 1.5), beta = uniform({3}, rng);
        Probe pr = probe_for({3, 4, 5}, rng);
        auto f = [&](Bindings& b) { return pr(b.tape(), ad::batch_norm2d(b.tape(), b(x), b(gamma), b(beta))); };
        out.push_back({"batch_norm2d", grad_check(f, {{"x", &x}, {"gamma", &gamma}, {"beta", &beta}}, opt)});
    }
    {  // activations
        Tensor x = off_zero({2, 3, 4}, rng);
        Probe pr = probe_for({2, 3, 4}, rng);
        using Act = ad::Var (*)(ad::Tape&, ad::Var);
        const std::pair<const char*, Act> acts[] = {{"relu", &ad::relu}, {"gelu", &ad::gelu}, {"sigmoid", &ad::sigmoid}};
        for (const auto& [name, act] : acts) {
            auto f = [&, act](Bindings& b) { return pr(b.tape(), act(b.tape(), b(x))); };
            out.push_back({name, grad_check(f, {{"x", &x}}, opt)});
        }
    }
    {  // KFc
        KFcParams p = KFcParams::zeros(3, 2, 3, 5, 4);
        p.k1 = uniform(p.k1.shape(), rng);
        p.k2 = uniform(p.k2.shape(), rng);
        p.b_c = uniform(p.b_c.shape(), rng);
        p.b_h = uniform(p.b_h.shape(), rng);
        p.b_w = uniform(p.b_w.shape(), rng);
        Tensor x = uniform({3, 2, 3}, rng);
        Probe pr = probe_for({3, 5, 4}, rng);
        auto f = [&](Bindings& b) { return pr(b.tape(), ad::kfc(b.tape(), b(x), ad::bind(b, p))); };
        out.push_back({"kfc", grad_check(f,
                                         {{"x", &x}, {"k1", &p.k1}, {"k2", &p.k2}, {"b_c", &p.b_c}, {"b_h", &p.b_h}, {"b_w", &p.b_w}},
                                         opt)});
    }
    {  // BSM and the concat fusion it is ablated against
        BSMParams p = BSMParams::make(2, 3, 3);
        randomize(p.w_n, rng);
        randomize(p.w_m, rng);
        randomize(p.w_s, rng);
        Tensor z = uniform({2, 4, 5}, rng), h = uniform({3, 4, 5}, rng);
        Probe pr = probe_for({3, 4, 5}, rng);
        auto f = [&](Bindings& b) { return pr(b.tape(), ad::bsm(b.tape(), b(z), b(h), ad::bind(b, p))); };
        out.push_back({"bsm", grad_check(f,
                                         {{"z", &z},
                                          {"h_prev", &h},
                                          {"w_n.weight", &p.w_n.weight},
                                          {"w_n.bias", &p.w_n.bias},
                                          {"w_m.weight", &p.w_m.weight},
                                          {"w_m.bias", &p.w_m.bias},
                                          {"w_s.weight", &p.w_s.weight},
                                          {"w_s.bias", &p.w_s.bias}},
                                         opt)});

        ConcatFusionParams c = ConcatFusionParams::make(2, 3);
        randomize(c.mix, rng);
        auto g = [&](Bindings& b) { return pr(b.tape(), ad::concat_fusion(b.tape(), b(z), b(h), ad::bind(b, c.mix))); };
        out.push_back({"concat_fusion", grad_check(g, {{"z", &z}, {"h_prev", &h}, {"weight", &c.mix.weight}, {"bias", &c.mix.bias}}, opt)});
    }
    {  // whole models, encoder included, trained loss
        const std::pair<UpscalerKind, FusionKind> variants[] = {{UpscalerKind::KFc, FusionKind::BSM},
                                                                {UpscalerKind::Deconv, FusionKind::Concat}};
        for (const auto& [up, fu] : variants) {
            PNeRVConfig cfg = PNeRVConfig::tiny_gradcheck();
            cfg.upscaler = up;
            cfg.fusion = fu;
            cfg.seed = seed;
            PNeRVModel model = build_model(cfg);
            // Non-trivial biases so every bias path carries gradient signal.
            for (auto& nt : model.named_tensors())
                if (nt.name.size() > 5 && nt.name.compare(nt.name.size() - 5, 5, ".bias") == 0)
                    *nt.value = uniform(nt.value->shape(), rng, -0.1, 0.1);
            const VideoClip clip = synthetic::moving_gradient(3, cfg.out_height(), cfg.out_width(), 1.0, seed);
            auto f = [&](Bindings& b) {
                const auto enc = ad::encode(b, model, clip, 1);
                return ad::mse(b.tape(), ad::decode(b, model, enc.content, enc.temporal), clip.frame(1));
            };
            out.push_back({"model/" + to_string(up) + "+" + to_string(fu), grad_check(f, model.named_tensors(), opt)});
        }
    }
    return out;
}

}  // namespace pnerv
