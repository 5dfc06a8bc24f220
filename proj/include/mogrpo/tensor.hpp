#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mogrpo {

using Rng = std::mt19937_64;

// Error categories shared by the whole library.
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size())
            throw InvalidInput("tensor: shape/data size mismatch");
    }

    static Tensor vector(std::vector<double> data) {
        auto n = data.size();
        return Tensor({n}, std::move(data));
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }

    bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    double squared_norm() const noexcept {
        return std::inner_product(data_.begin(), data_.end(), data_.begin(), 0.0);
    }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) noexcept {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    bool operator==(const Tensor&) const = default;

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) {
            if (d == 0) throw InvalidInput("tensor: zero-sized dimension");
            n *= d;
        }
        return n;
    }

    std::string shape_string() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ')';
        return os.str();
    }

private:
    void require_same(const Tensor& o, const char* op) const {
        if (shape_ != o.shape_)
            throw InvalidInput(std::string("tensor ") + op + ": shape mismatch " + shape_string() +
                               " vs " + o.shape_string());
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Elementwise a*x + y into y.
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

} // namespace mogrpo
