#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace odenet::nn {

struct Shape {
    std::size_t n = 0; ///< batch
    std::size_t c = 0; ///< channels
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t count() const noexcept { return n * c * h * w; }
    std::size_t sample_size() const noexcept { return c * h * w; }
    std::size_t plane() const noexcept { return h * w; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense N x C x H x W array of doubles, row-major with the batch outermost.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }

    std::span<double> sample(std::size_t n) noexcept {
        return std::span<double>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
    }
    std::span<const double> sample(std::size_t n) const noexcept {
        return std::span<const double>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
    }

    void fill(double v) noexcept;
    bool all_finite() const noexcept;

    /// Copies samples [first, first + count) into a new tensor.
    Tensor slice(std::size_t first, std::size_t count) const;
    /// Gathers the listed samples in order.
    Tensor gather(std::span<const std::size_t> indices) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace odenet::nn
