#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fisherprune/criteria.hpp"
#include "fisherprune/data.hpp"
#include "fisherprune/oracle.hpp"

namespace fixtures {

// Deterministic digit-like images: 10 stroke patterns on a 28x28 canvas with
// a zero border, random shifts and pixel noise. Written in IDX format so the
// tests drive the real reader.
struct IdxPaths {
    std::string images;
    std::string labels;
};
IdxPaths write_synth_mnist(const std::filesystem::path& dir, std::int64_t count,
                           std::uint64_t seed);

// Deterministic 3x32x32 color patterns (stripes, blobs, checkers per class)
// written as CIFAR-10 binary records.
std::string write_synth_cifar(const std::filesystem::path& dir, std::int64_t count,
                              std::uint64_t seed);

// in-memory variants, for tests that do not need the file round-trip
fisherprune::Dataset synth_mnist_dataset(std::int64_t count, std::uint64_t seed);
fisherprune::Dataset synth_cifar_dataset(std::int64_t count, std::uint64_t seed);

std::filesystem::path fresh_temp_dir(const std::string& tag);

// gradient of L = 0.5 sum a_q w_q^2, for the grasp analytic oracle
class QuadraticGradientSource : public fisherprune::GradientSource {
public:
    explicit QuadraticGradientSource(std::vector<double> a) : a_(std::move(a)) {}
    std::int64_t dim() const override { return static_cast<std::int64_t>(a_.size()); }
    std::vector<double> gradient_at(std::span<const double> w) override {
        std::vector<double> g(a_.size());
        for (std::size_t q = 0; q < a_.size(); ++q) g[q] = a_[q] * w[q];
        return g;
    }

private:
    std::vector<double> a_;
};

// gradient of L = sum c_q w_q^4; H grad = 48 c^2 w^5 analytically
class QuarticGradientSource : public fisherprune::GradientSource {
public:
    explicit QuarticGradientSource(std::vector<double> c) : c_(std::move(c)) {}
    std::int64_t dim() const override { return static_cast<std::int64_t>(c_.size()); }
    std::vector<double> gradient_at(std::span<const double> w) override {
        std::vector<double> g(c_.size());
        for (std::size_t q = 0; q < c_.size(); ++q) g[q] = 4.0 * c_[q] * w[q] * w[q] * w[q];
        return g;
    }

private:
    std::vector<double> c_;
};

}  // namespace fixtures
