#include "pnerv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pnerv {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ')';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    if (shape_.empty() || shape_.size() > 4) throw ShapeError("tensor rank must be 1..4, got " + shape_str(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 4) throw ShapeError("tensor rank must be 1..4, got " + shape_str(shape_));
    if (data_.size() != shape_numel(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

Tensor Tensor::vec(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::span<double> Tensor::channel(std::size_t c) {
    const std::size_t hw = shape_.at(1) * shape_.at(2);
    return std::span<double>(data_).subspan(c * hw, hw);
}

std::span<const double> Tensor::channel(std::size_t c) const {
    const std::size_t hw = shape_.at(1) * shape_.at(2);
    return std::span<const double>(data_).subspan(c * hw, hw);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return acc;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi) {
    Tensor t(shape);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.storage()) v = dist(rng);
    return t;
}

Tensor normal(const Shape& shape, Rng& rng, double mean, double stddev) {
    Tensor t(shape);
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& v : t.storage()) v = dist(rng);
    return t;
}

Tensor kaiming_normal_fan_out(const Shape& shape, Rng& rng) {
    std::size_t receptive = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
    const std::size_t fan_out = shape.at(0) * receptive;
    return normal(shape, rng, 0.0, std::sqrt(2.0 / static_cast<double>(fan_out)));
}

}  // namespace pnerv
