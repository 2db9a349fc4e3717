#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "fisherprune/errors.hpp"

namespace fisherprune {

// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel_of(shape_) != static_cast<std::int64_t>(data_.size()))
            throw ShapeMismatch("tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<std::int64_t> shape) {
        const auto n = numel_of(shape);
        return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(std::vector<std::int64_t> new_shape) const {
        if (numel_of(new_shape) != numel())
            throw ShapeMismatch("reshape changes element count");
        return Tensor(std::move(new_shape), data_);
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

}  // namespace fisherprune
