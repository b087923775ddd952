#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pnerv {

/// Thrown for any violated shape contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Dense row-major tensor of doubles, rank 1 to 4.
///
/// Rank-3 tensors are the feature maps of the decoder (C x H x W, index
/// (c*H + h)*W + w). Rank-4 tensors hold convolution kernels
/// (out x in x k x k). Vectors (biases) are rank 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor chw(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0) {
        return Tensor({c, h, w}, fill);
    }
    static Tensor vec(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }
    static Tensor vec(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Rank-3 accessors.
    std::size_t channels() const { return shape_.at(0); }
    std::size_t height() const { return shape_.at(1); }
    std::size_t width() const { return shape_.at(2); }

    double& operator()(std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    double operator()(std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    /// Slice of one channel of a rank-3 tensor (H*W contiguous values).
    std::span<double> channel(std::size_t c);
    std::span<const double> channel(std::size_t c) const;

    Tensor reshaped(Shape shape) const;
    void fill(double v);

    bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }
    bool all_finite() const noexcept;

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s);

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Seeded generator used for every random draw in the library.
using Rng = std::mt19937_64;

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);
Tensor normal(const Shape& shape, Rng& rng, double mean = 0.0, double stddev = 1.0);

/// Kaiming-normal init in fan-out mode with ReLU gain: std = sqrt(2 / fan_out),
/// fan_out = dim(0) * prod(dim(2..)).
Tensor kaiming_normal_fan_out(const Shape& shape, Rng& rng);

}  // namespace pnerv
