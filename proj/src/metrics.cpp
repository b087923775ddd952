#include "pnerv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pnerv {

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::clamp(a[i], 0.0, 1.0) - std::clamp(b[i], 0.0, 1.0);
        acc += d * d;
    }
    const double m = acc / static_cast<double>(a.size());
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

namespace {

std::vector<double> gaussian_window(std::size_t n, double sigma) {
    std::vector<double> g(n);
    const double mid = (static_cast<double>(n) - 1.0) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - mid;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    const double s = std::accumulate(g.begin(), g.end(), 0.0);
    for (auto& v : g) v /= s;
    return g;
}

// Separable valid-mode filtering of one H x W plane.
std::vector<double> filter_valid(std::span<const double> src, std::size_t H, std::size_t W, const std::vector<double>& g) {
    const std::size_t n = g.size(), Ho = H - n + 1, Wo = W - n + 1;
    std::vector<double> rows(H * Wo);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < Wo; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += g[k] * src[y * W + x + k];
            rows[y * Wo + x] = acc;
        }
    std::vector<double> out(Ho * Wo);
    for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t x = 0; x < Wo; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += g[k] * rows[(y + k) * Wo + x];
            out[y * Wo + x] = acc;
        }
    return out;
}

}  // namespace

SsimTerms ssim_terms(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
    require_same_shape(a, b, "ssim");
    if (a.rank() != 3) throw ShapeError("ssim: expected C x H x W");
    const std::size_t H = a.height(), W = a.width();
    if (std::min(H, W) < opt.window)
        throw ShapeError("ssim: frame " + std::to_string(H) + "x" + std::to_string(W) + " smaller than the " +
                         std::to_string(opt.window) + "-tap window");
    const auto g = gaussian_window(opt.window, opt.sigma);
    const double c1 = (opt.k1 * opt.data_range) * (opt.k1 * opt.data_range);
    const double c2 = (opt.k2 * opt.data_range) * (opt.k2 * opt.data_range);

    SsimTerms out;
    std::vector<double> aa(H * W), bb(H * W), ab(H * W);
    for (std::size_t c = 0; c < a.channels(); ++c) {
        const auto x = a.channel(c), y = b.channel(c);
        for (std::size_t i = 0; i < H * W; ++i) {
            aa[i] = x[i] * x[i];
            bb[i] = y[i] * y[i];
            ab[i] = x[i] * y[i];
        }
        const auto mu_a = filter_valid(x, H, W, g), mu_b = filter_valid(y, H, W, g);
        const auto e_aa = filter_valid(aa, H, W, g), e_bb = filter_valid(bb, H, W, g), e_ab = filter_valid(ab, H, W, g);
        double s_sum = 0.0, cs_sum = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = e_aa[i] - mu_a[i] * mu_a[i];
            const double vb = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            const double cs = (2.0 * cov + c2) / (va + vb + c2);
            const double lum = (2.0 * mu_a[i] * mu_b[i] + c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1);
            s_sum += lum * cs;
            cs_sum += cs;
        }
        out.ssim.push_back(s_sum / static_cast<double>(mu_a.size()));
        out.cs.push_back(cs_sum / static_cast<double>(mu_a.size()));
    }
    return out;
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
    const auto t = ssim_terms(a, b, opt);
    return std::accumulate(t.ssim.begin(), t.ssim.end(), 0.0) / static_cast<double>(t.ssim.size());
}

std::size_t ms_ssim_scales(std::size_t height, std::size_t width, std::size_t window) {
    std::size_t n = 0;
    std::size_t m = std::min(height, width);
    while (n < 5 && m >= window) {
        ++n;
        m /= 2;
    }
    return n;
}

Tensor avg_pool2(const Tensor& x) {
    const std::size_t H = x.height() / 2, W = x.width() / 2;
    Tensor y = Tensor::chw(x.channels(), H, W);
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
                y(c, h, w) = 0.25 * (x(c, 2 * h, 2 * w) + x(c, 2 * h, 2 * w + 1) + x(c, 2 * h + 1, 2 * w) + x(c, 2 * h + 1, 2 * w + 1));
    return y;
}

double ms_ssim(const Tensor& a, const Tensor& b, std::size_t* scales_used, const SsimOptions& opt) {
    require_same_shape(a, b, "ms_ssim");
    const std::size_t scales = ms_ssim_scales(a.height(), a.width(), opt.window);
    if (scales == 0) throw ShapeError("ms_ssim: frame smaller than the SSIM window");
    if (scales_used) *scales_used = scales;
    double wsum = 0.0;
    for (std::size_t s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];

    const std::size_t C = a.channels();
    std::vector<double> prod(C, 1.0);
    Tensor x = a, y = b;
    for (std::size_t s = 0; s < scales; ++s) {
        const auto t = ssim_terms(x, y, opt);
        const double w = kMsSsimWeights[s] / wsum;
        const auto& term = s + 1 == scales ? t.ssim : t.cs;
        for (std::size_t c = 0; c < C; ++c) prod[c] *= std::pow(std::max(term[c], 0.0), w);
        if (s + 1 < scales) {
            x = avg_pool2(x);
            y = avg_pool2(y);
        }
    }
    return std::accumulate(prod.begin(), prod.end(), 0.0) / static_cast<double>(C);
}

double bpp(std::uint64_t model_bits, std::uint64_t embedding_bits, std::size_t frames, std::size_t height, std::size_t width) {
    if (!frames || !height || !width) throw std::invalid_argument("bpp: dimensions must be positive");
    return static_cast<double>(model_bits + embedding_bits) / static_cast<double>(frames * height * width);
}

double QualityReport::avg_psnr() const {
    return psnr.empty() ? 0.0 : std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size());
}

namespace {
std::optional<double> avg_optional(const std::vector<std::optional<double>>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& x : v) {
        if (!x) return std::nullopt;
        s += *x;
    }
    return s / static_cast<double>(v.size());
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
}  // namespace

std::optional<double> QualityReport::avg_ssim() const { return avg_optional(ssim); }
std::optional<double> QualityReport::avg_ms_ssim() const { return avg_optional(ms_ssim); }

nlohmann::json QualityReport::to_json() const {
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t i = 0; i < psnr.size(); ++i)
        frames.push_back({{"frame", frame_index[i]}, {"psnr", psnr[i]}, {"ssim", opt_json(ssim[i])}, {"ms_ssim", opt_json(ms_ssim[i])}});
    return {{"frames", frames},
            {"avg_psnr", avg_psnr()},
            {"avg_ssim", opt_json(avg_ssim())},
            {"avg_ms_ssim", opt_json(avg_ms_ssim())},
            {"ms_ssim_scales", ms_ssim_scales}};
}

QualityReport evaluate_frames(const std::vector<Tensor>& recon, const std::vector<Tensor>& reference,
                              const std::vector<std::size_t>& frame_index) {
    if (recon.size() != reference.size() || recon.size() != frame_index.size())
        throw std::invalid_argument("evaluate_frames: length mismatch");
    QualityReport r;
    r.frame_index = frame_index;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        r.psnr.push_back(psnr(recon[i], reference[i]));
        Tensor a = recon[i];
        for (auto& v : a.storage()) v = std::clamp(v, 0.0, 1.0);
        const bool fits = std::min(a.height(), a.width()) >= SsimOptions{}.window;
        if (fits) {
            r.ssim.push_back(ssim(a, reference[i]));
            r.ms_ssim.push_back(ms_ssim(a, reference[i], &r.ms_ssim_scales));
        } else {
            r.ssim.push_back(std::nullopt);
            r.ms_ssim.push_back(std::nullopt);
        }
    }
    return r;
}

}  // namespace pnerv
