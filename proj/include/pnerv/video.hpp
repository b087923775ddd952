#pragma once

#include "pnerv/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pnerv {

/// T RGB frames of H x W, each stored as a 3 x H x W tensor with values in [0, 1].
class VideoClip {
public:
    VideoClip() = default;
    VideoClip(std::size_t frames, std::size_t height, std::size_t width, double fill = 0.0);
    explicit VideoClip(std::vector<Tensor> frames);

    std::size_t frames() const noexcept { return frames_.size(); }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }

    Tensor& frame(std::size_t t) { return frames_.at(t); }
    const Tensor& frame(std::size_t t) const { return frames_.at(t); }
    const std::vector<Tensor>& all() const noexcept { return frames_; }

    /// Frames at the given indices, in order.
    VideoClip subset(const std::vector<std::size_t>& indices) const;

private:
    std::size_t height_ = 0, width_ = 0;
    std::vector<Tensor> frames_;
};

/// Largest centered window with W = 2H that fits in (height, width).
struct CropWindow {
    std::size_t top, left, height, width;
};
CropWindow center_crop_1x2(std::size_t height, std::size_t width);
VideoClip apply_crop(const VideoClip& clip, const CropWindow& win);

/// 8-bit code for a [0, 1] value: clamp, scale by 255, round half away from zero.
std::uint8_t to_code(double v);
inline double from_code(std::uint8_t c) { return static_cast<double>(c) / 255.0; }

/// Reads a `.rgbv` file or a directory of P6 frames named frame_%05d.ppm.
/// Frames whose aspect is not 1:2 are center-cropped.
VideoClip load_video(const std::string& path);
/// Writes `.rgbv` when the path has that extension, otherwise a PPM directory.
void save_video(const VideoClip& clip, const std::string& path);

void write_ppm(const Tensor& frame, const std::string& path);
Tensor read_ppm(const std::string& path);

// Synthetic clips used by tests, the acceptance suite and the CLI demo paths.
namespace synthetic {
VideoClip constant(std::size_t frames, std::size_t height, std::size_t width, double value);
/// frame_t = t * step in every entry (t = 0..T-1).
VideoClip ramp(std::size_t frames, std::size_t height, std::size_t width, double step);
/// Smooth color gradient translating by `speed` pixels per frame, seeded phase.
VideoClip moving_gradient(std::size_t frames, std::size_t height, std::size_t width, double speed, std::uint64_t seed);
}  // namespace synthetic

}  // namespace pnerv
