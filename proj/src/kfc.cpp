#include "pnerv/kfc.hpp"

#include <algorithm>
#include <cctype>

namespace pnerv {

KFcParams KFcParams::zeros(std::size_t channels, std::size_t h_in, std::size_t w_in, std::size_t h_out, std::size_t w_out) {
    if (!channels || !h_in || !w_in || !h_out || !w_out) throw ShapeError("KFc dimensions must be positive");
    return KFcParams{Tensor({channels, h_out, h_in}), Tensor({channels, w_in, w_out}), Tensor::vec(channels), Tensor::vec(h_out),
                     Tensor::vec(w_out)};
}

void KFcParams::init_kaiming(Rng& rng) {
    k1 = kaiming_normal_fan_out(k1.shape(), rng);
    k2 = kaiming_normal_fan_out(k2.shape(), rng);
    b_c.fill(0.0);
    b_h.fill(1.0);
    b_w.fill(1.0);
}

void KFcParams::validate() const {
    if (k1.rank() != 3 || k2.rank() != 3 || b_c.rank() != 1 || b_h.rank() != 1 || b_w.rank() != 1)
        throw ShapeError("KFc: K1/K2 must be rank 3 and biases rank 1");
    if (k1.dim(0) != k2.dim(0) || b_c.size() != k1.dim(0)) throw ShapeError("KFc: channel counts of K1, K2, b_c disagree");
    if (b_h.size() != k1.dim(1)) throw ShapeError("KFc: b_h length must equal H_out");
    if (b_w.size() != k2.dim(2)) throw ShapeError("KFc: b_w length must equal W_out");
}

namespace {

void check_input(const Tensor& x, const Tensor& k1, const Tensor& k2) {
    if (x.rank() != 3 || x.channels() != k1.dim(0) || x.height() != k1.dim(2) || x.width() != k2.dim(1))
        throw ShapeError("kfc: input " + shape_str(x.shape()) + " does not match K1 " + shape_str(k1.shape()) + ", K2 " +
                         shape_str(k2.shape()));
}

// dst (m x n) = a (m x p) * b (p x n), all row-major.
void matmul(const double* a, const double* b, double* dst, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* row = dst + i * n;
        std::fill(row, row + n, 0.0);
        for (std::size_t k = 0; k < p; ++k) {
            const double av = a[i * p + k];
            const double* brow = b + k * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
}

// K1_i * X_i for every channel: C x H_out x W_in.
Tensor left_products(const Tensor& x, const Tensor& k1) {
    const std::size_t C = k1.dim(0), Ho = k1.dim(1), Hi = k1.dim(2), Wi = x.width();
    Tensor t({C, Ho, Wi});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c)
        matmul(k1.data().data() + c * Ho * Hi, x.data().data() + c * Hi * Wi, t.data().data() + c * Ho * Wi, Ho, Hi, Wi);
    return t;
}

Tensor kfc_apply(const Tensor& x, const Tensor& k1, const Tensor& k2, const Tensor& b_c, const Tensor& b_h, const Tensor& b_w,
                 Tensor* left_out) {
    check_input(x, k1, k2);
    const std::size_t C = k1.dim(0), Ho = k1.dim(1), Wi = k2.dim(1), Wo = k2.dim(2);
    Tensor left = left_products(x, k1);
    Tensor y = Tensor::chw(C, Ho, Wo);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
        double* out = y.data().data() + c * Ho * Wo;
        matmul(left.data().data() + c * Ho * Wi, k2.data().data() + c * Wi * Wo, out, Ho, Wi, Wo);
        for (std::size_t h = 0; h < Ho; ++h)
            for (std::size_t w = 0; w < Wo; ++w) out[h * Wo + w] += b_c[c] * b_h[h] * b_w[w];
    }
    if (left_out) *left_out = std::move(left);
    return y;
}

}  // namespace

Tensor kfc_forward(const Tensor& x, const KFcParams& p) {
    p.validate();
    return kfc_apply(x, p.k1, p.k2, p.b_c, p.b_h, p.b_w, nullptr);
}

Tensor kfc_bias(const Tensor& b_c, const Tensor& b_h, const Tensor& b_w) {
    Tensor y = Tensor::chw(b_c.size(), b_h.size(), b_w.size());
    for (std::size_t c = 0; c < b_c.size(); ++c)
        for (std::size_t h = 0; h < b_h.size(); ++h)
            for (std::size_t w = 0; w < b_w.size(); ++w) y(c, h, w) = b_c[c] * b_h[h] * b_w[w];
    return y;
}

Tensor kfc_dense_oracle(const KFcParams& p, std::size_t channel) {
    p.validate();
    if (channel >= p.channels()) throw std::out_of_range("kfc_dense_oracle: channel out of range");
    const std::size_t Ho = p.h_out(), Hi = p.h_in(), Wi = p.w_in(), Wo = p.w_out();
    Tensor m({Ho * Wo, Hi * Wi});
    for (std::size_t a = 0; a < Ho; ++a)
        for (std::size_t b = 0; b < Wo; ++b)
            for (std::size_t c = 0; c < Hi; ++c)
                for (std::size_t d = 0; d < Wi; ++d)
                    m[(a * Wo + b) * (Hi * Wi) + c * Wi + d] = p.k1(channel, a, c) * p.k2(channel, d, b);
    return m;
}

namespace ad {

KFcVars bind(Bindings& b, const KFcParams& p) {
    return {b(p.k1), b(p.k2), b(p.b_c), b(p.b_h), b(p.b_w)};
}

Var kfc(Tape& t, Var x, const KFcVars& p) {
    const Tensor& xv = t.value(x);
    const Tensor& k1 = t.value(p.k1);
    const Tensor& k2 = t.value(p.k2);
    const Tensor& bc = t.value(p.b_c);
    const Tensor& bh = t.value(p.b_h);
    const Tensor& bw = t.value(p.b_w);
    KFcParams{k1, k2, bc, bh, bw}.validate();
    Tensor left;
    Tensor y = kfc_apply(xv, k1, k2, bc, bh, bw, &left);
    return t.record(
        "kfc", std::move(y), {x, p.k1, p.k2, p.b_c, p.b_h, p.b_w},
        [xv, k1, k2, bc, bh, bw, left = std::move(left)](const Tensor& gy, std::span<Tensor* const> gin) {
            const std::size_t C = k1.dim(0), Ho = k1.dim(1), Hi = k1.dim(2), Wi = k2.dim(1), Wo = k2.dim(2);
            std::vector<double> dleft(Ho * Wi);
            for (std::size_t c = 0; c < C; ++c) {
                const double* g = gy.data().data() + c * Ho * Wo;
                const double* l = left.data().data() + c * Ho * Wi;
                const double* a = k1.data().data() + c * Ho * Hi;
                const double* b = k2.data().data() + c * Wi * Wo;
                const double* xc = xv.data().data() + c * Hi * Wi;
                // dK2 = left^T G
                if (gin[2]) {
                    double* d = gin[2]->data().data() + c * Wi * Wo;
                    for (std::size_t h = 0; h < Ho; ++h)
                        for (std::size_t i = 0; i < Wi; ++i)
                            for (std::size_t j = 0; j < Wo; ++j) d[i * Wo + j] += l[h * Wi + i] * g[h * Wo + j];
                }
                // dLeft = G K2^T
                for (std::size_t h = 0; h < Ho; ++h)
                    for (std::size_t i = 0; i < Wi; ++i) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < Wo; ++j) acc += g[h * Wo + j] * b[i * Wo + j];
                        dleft[h * Wi + i] = acc;
                    }
                // dK1 = dLeft X^T
                if (gin[1]) {
                    double* d = gin[1]->data().data() + c * Ho * Hi;
                    for (std::size_t h = 0; h < Ho; ++h)
                        for (std::size_t r = 0; r < Hi; ++r) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < Wi; ++i) acc += dleft[h * Wi + i] * xc[r * Wi + i];
                            d[h * Hi + r] += acc;
                        }
                }
                // dX = K1^T dLeft
                if (gin[0]) {
                    double* d = gin[0]->data().data() + c * Hi * Wi;
                    for (std::size_t h = 0; h < Ho; ++h)
                        for (std::size_t r = 0; r < Hi; ++r)
                            for (std::size_t i = 0; i < Wi; ++i) d[r * Wi + i] += a[h * Hi + r] * dleft[h * Wi + i];
                }
                for (std::size_t h = 0; h < Ho; ++h)
                    for (std::size_t w = 0; w < Wo; ++w) {
                        const double gv = g[h * Wo + w];
                        if (gin[3]) (*gin[3])[c] += gv * bh[h] * bw[w];
                        if (gin[4]) (*gin[4])[h] += gv * bc[c] * bw[w];
                        if (gin[5]) (*gin[5])[w] += gv * bc[c] * bh[h];
                    }
            }
        });
}

}  // namespace ad

std::string to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::KFc: return "kfc";
        case OperatorKind::PixelShuffle: return "pixelshuffle";
        case OperatorKind::Deconv: return "deconv";
        case OperatorKind::Bilinear: return "bilinear";
    }
    return "unknown";
}

OperatorKind operator_kind_from_string(const std::string& s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "kfc") return OperatorKind::KFc;
    if (lower == "pixelshuffle" || lower == "ps") return OperatorKind::PixelShuffle;
    if (lower == "deconv") return OperatorKind::Deconv;
    if (lower == "bilinear") return OperatorKind::Bilinear;
    throw std::invalid_argument("unknown operator kind '" + s + "'");
}

OperatorBudget kfc_param_count(std::uint64_t c, std::uint64_t h_in, std::uint64_t w_in, std::uint64_t h_out, std::uint64_t w_out) {
    if (!c || !h_in || !w_in || !h_out || !w_out) throw std::invalid_argument("kfc_param_count: dimensions must be positive");
    OperatorBudget b;
    b.kind = OperatorKind::KFc;
    b.kernel_params = c * (h_out * h_in + w_in * w_out);
    b.bias_params = c + h_out + w_out;
    return b;
}

OperatorBudget pixelshuffle_param_count(std::uint64_t c, std::uint64_t k, std::uint64_t r) {
    if (!c || !k || !r) throw std::invalid_argument("pixelshuffle_param_count: arguments must be positive");
    OperatorBudget b;
    b.kind = OperatorKind::PixelShuffle;
    b.kernel_params = c * r * r * c * k * k;
    b.bias_params = c * r * r;
    return b;
}

OperatorBudget operator_flops(OperatorKind kind, const UpscaleShape& s) {
    const auto C = s.channels;
    OperatorBudget b;
    switch (kind) {
        case OperatorKind::KFc:
            b = kfc_param_count(C, s.h_in, s.w_in, s.h_out, s.w_out);
            b.macs = C * (s.h_out * s.h_in * s.w_in + s.h_out * s.w_in * s.w_out);
            b.adds = C * s.h_out * s.w_out;
            break;
        case OperatorKind::PixelShuffle:
            b = pixelshuffle_param_count(C, s.kernel, s.rate);
            b.macs = C * s.rate * s.rate * C * s.kernel * s.kernel * s.h_in * s.w_in;
            b.adds = C * s.rate * s.rate * s.h_in * s.w_in;
            break;
        case OperatorKind::Deconv:
            // Kernel r, stride r: every input pixel feeds an r x r output patch.
            if (!C || !s.rate) throw std::invalid_argument("operator_flops: deconv needs positive channels and rate");
            b.kind = OperatorKind::Deconv;
            b.kernel_params = C * C * s.rate * s.rate;
            b.bias_params = C;
            b.macs = C * C * s.rate * s.rate * s.h_in * s.w_in;
            b.adds = C * s.h_out * s.w_out;
            break;
        case OperatorKind::Bilinear:
            b.kind = OperatorKind::Bilinear;
            b.macs = 4 * C * s.h_out * s.w_out;
            break;
    }
    return b;
}

}  // namespace pnerv
