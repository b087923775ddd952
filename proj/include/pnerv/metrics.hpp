#pragma once

#include "pnerv/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace pnerv {

/// PSNR reported for a zero-MSE pair.
inline constexpr double kPsnrCap = 99.0;

/// Mean squared error.
double mse(const Tensor& a, const Tensor& b);
/// 10 log10(1 / MSE) on inputs clamped to [0, 1]; kPsnrCap when MSE is 0.
double psnr(const Tensor& a, const Tensor& b);

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Per-channel mean SSIM and contrast-structure terms over valid windows.
struct SsimTerms {
    std::vector<double> ssim;
    std::vector<double> cs;
};

SsimTerms ssim_terms(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});
/// Gaussian-window SSIM averaged over valid positions and channels.
/// Throws ShapeError if min(H, W) < window.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Scales usable for an H x W frame: the largest n <= 5 with min(H, W) / 2^(n-1) >= window.
std::size_t ms_ssim_scales(std::size_t height, std::size_t width, std::size_t window = 11);
/// 2x2 average pool (odd trailing row/column dropped).
Tensor avg_pool2(const Tensor& x);
/// Multi-scale SSIM with renormalized weights when fewer than 5 scales fit.
/// Negative per-scale terms are clamped to 0 before exponentiation.
double ms_ssim(const Tensor& a, const Tensor& b, std::size_t* scales_used = nullptr, const SsimOptions& opt = {});

/// (model_bits + embedding_bits) / (T * H * W).
double bpp(std::uint64_t model_bits, std::uint64_t embedding_bits, std::size_t frames, std::size_t height, std::size_t width);

struct QualityReport {
    std::vector<std::size_t> frame_index;
    std::vector<double> psnr;
    std::vector<std::optional<double>> ssim;
    std::vector<std::optional<double>> ms_ssim;
    std::size_t ms_ssim_scales = 0;

    double avg_psnr() const;
    std::optional<double> avg_ssim() const;
    std::optional<double> avg_ms_ssim() const;
    nlohmann::json to_json() const;
};

/// Scores each (reconstruction, reference) pair; SSIM terms are null when
/// the frame is smaller than the SSIM window.
QualityReport evaluate_frames(const std::vector<Tensor>& recon, const std::vector<Tensor>& reference,
                              const std::vector<std::size_t>& frame_index);

}  // namespace pnerv
