#include "pnerv/video.hpp"

#include "pnerv/binary_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace pnerv {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

VideoClip::VideoClip(std::size_t frames, std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), frames_(frames, Tensor::chw(3, height, width, fill)) {}

VideoClip::VideoClip(std::vector<Tensor> frames) : frames_(std::move(frames)) {
    if (frames_.empty()) throw ShapeError("video clip needs at least one frame");
    height_ = frames_[0].height();
    width_ = frames_[0].width();
    for (const auto& f : frames_)
        if (f.rank() != 3 || f.channels() != 3 || f.height() != height_ || f.width() != width_)
            throw ShapeError("video frames must all be 3 x H x W of equal size");
}

VideoClip VideoClip::subset(const std::vector<std::size_t>& indices) const {
    std::vector<Tensor> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(frames_.at(i));
    return VideoClip(std::move(out));
}

CropWindow center_crop_1x2(std::size_t height, std::size_t width) {
    std::size_t h = height, w = 2 * height;
    if (w > width) {
        h = width / 2;
        w = 2 * h;
    }
    if (h == 0) throw ShapeError("frame too small to crop to 1:2");
    return {(height - h) / 2, (width - w) / 2, h, w};
}

VideoClip apply_crop(const VideoClip& clip, const CropWindow& win) {
    if (win.top == 0 && win.left == 0 && win.height == clip.height() && win.width == clip.width()) return clip;
    std::vector<Tensor> out;
    for (const auto& f : clip.all()) {
        Tensor c = Tensor::chw(3, win.height, win.width);
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < win.height; ++y)
                for (std::size_t x = 0; x < win.width; ++x) c(ch, y, x) = f(ch, win.top + y, win.left + x);
        out.push_back(std::move(c));
    }
    return VideoClip(std::move(out));
}

std::uint8_t to_code(double v) {
    const double c = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<std::uint8_t>(std::round(c));
}

namespace {

constexpr char kRgbvMagic[4] = {'R', 'G', 'B', 'V'};

VideoClip frames_from_bytes(const std::uint8_t* p, std::size_t T, std::size_t H, std::size_t W) {
    std::vector<Tensor> frames;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor f = Tensor::chw(3, H, W);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c) f(c, y, x) = from_code(*p++);
        frames.push_back(std::move(f));
    }
    return VideoClip(std::move(frames));
}

void append_frame_bytes(ByteWriter& w, const Tensor& f) {
    for (std::size_t y = 0; y < f.height(); ++y)
        for (std::size_t x = 0; x < f.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) w.u8(to_code(f(c, y, x)));
}

VideoClip load_rgbv(const std::string& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    if (r.str(4) != std::string(kRgbvMagic, 4)) throw FormatError("'" + path + "': bad magic, expected RGBV");
    const std::size_t T = r.u32(), H = r.u32(), W = r.u32();
    if (T == 0 || H == 0 || W == 0) throw FormatError("'" + path + "': empty video");
    const std::uint8_t* p = r.raw(T * H * W * 3);
    return frames_from_bytes(p, T, H, W);
}

// Next whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(ByteReader& r) {
    std::string tok;
    while (true) {
        const char ch = static_cast<char>(r.u8());
        if (ch == '#') {
            while (static_cast<char>(r.u8()) != '\n') {
            }
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(ch);
    }
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    if (pnm_token(r) != "P6") throw FormatError("'" + path + "': not a binary PPM (P6)");
    const std::size_t W = std::stoul(pnm_token(r)), H = std::stoul(pnm_token(r)), maxval = std::stoul(pnm_token(r));
    if (maxval != 255) throw FormatError("'" + path + "': only 8-bit PPM is supported");
    return frames_from_bytes(r.raw(W * H * 3), 1, H, W).frame(0);
}

void write_ppm(const Tensor& frame, const std::string& path) {
    ByteWriter w;
    w.bytes("P6\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n255\n");
    append_frame_bytes(w, frame);
    write_file(path, w.buffer());
}

VideoClip load_video(const std::string& path) {
    VideoClip clip;
    if (fs::is_directory(path)) {
        std::vector<Tensor> frames;
        for (std::size_t t = 0;; ++t) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%05zu.ppm", t);
            const fs::path p = fs::path(path) / name;
            // Numbering may start at 0 or 1.
            if (!fs::exists(p)) {
                if (t == 0) continue;
                break;
            }
            frames.push_back(read_ppm(p.string()));
        }
        if (frames.empty()) throw FormatError("'" + path + "': no frame_%05d.ppm files");
        clip = VideoClip(std::move(frames));
    } else {
        clip = load_rgbv(path);
    }
    return apply_crop(clip, center_crop_1x2(clip.height(), clip.width()));
}

void save_video(const VideoClip& clip, const std::string& path) {
    if (fs::path(path).extension() == ".rgbv") {
        ByteWriter w;
        w.bytes(std::string_view(kRgbvMagic, 4));
        w.u32(static_cast<std::uint32_t>(clip.frames()));
        w.u32(static_cast<std::uint32_t>(clip.height()));
        w.u32(static_cast<std::uint32_t>(clip.width()));
        for (const auto& f : clip.all()) append_frame_bytes(w, f);
        write_file(path, w.buffer());
        return;
    }
    fs::create_directories(path);
    for (std::size_t t = 0; t < clip.frames(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05zu.ppm", t + 1);
        write_ppm(clip.frame(t), (fs::path(path) / name).string());
    }
}

namespace synthetic {

VideoClip constant(std::size_t frames, std::size_t height, std::size_t width, double value) {
    return VideoClip(frames, height, width, value);
}

VideoClip ramp(std::size_t frames, std::size_t height, std::size_t width, double step) {
    VideoClip clip(frames, height, width);
    for (std::size_t t = 0; t < frames; ++t) clip.frame(t).fill(static_cast<double>(t) * step);
    return clip;
}

VideoClip moving_gradient(std::size_t frames, std::size_t height, std::size_t width, double speed, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> freq(0.5, 1.5);
    double ph[3], fx[3], fy[3];
    for (int c = 0; c < 3; ++c) {
        ph[c] = phase(rng);
        fx[c] = freq(rng);
        fy[c] = freq(rng);
    }
    VideoClip clip(frames, height, width);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double u = (static_cast<double>(x) - speed * static_cast<double>(t)) / static_cast<double>(width);
                    const double v = static_cast<double>(y) / static_cast<double>(height);
                    clip.frame(t)(c, y, x) = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * (fx[c] * u + fy[c] * v) + ph[c]);
                }
    return clip;
}

}  // namespace synthetic
}  // namespace pnerv
