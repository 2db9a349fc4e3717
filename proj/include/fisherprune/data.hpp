#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fisherprune/model.hpp"
#include "fisherprune/tensor.hpp"

namespace fisherprune {

struct Dataset {
    Tensor images;  // [N,C,H,W], values in [0,1] for file-backed data
    std::vector<std::int32_t> labels;
    std::int32_t class_count = 0;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    std::vector<std::int64_t> class_counts() const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    bool stratified = true;
    std::uint64_t seed = 0;
};

// MNIST IDX pair (big-endian magics 2051/2049); pixels scaled by 1/255
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, channel-major RGB
Dataset load_cifar10_bin(const std::vector<std::string>& paths);

// Isotropic Gaussian classes at fixed distinct means; round-robin class order
Dataset synth_blobs(std::int32_t classes, std::int64_t dim, std::int64_t per_class,
                    std::uint64_t seed);

// Per-class split with train count floor(train_fraction * n_c). Membership is
// a function of sample content and seed, not of input order.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec);

// Seeded stratified subset of exactly n samples (largest-remainder per class)
Dataset stratified_subset(const Dataset& ds, std::int64_t n, std::uint64_t seed);

Dataset select_samples(const Dataset& ds, std::span<const std::int64_t> indices);
Batch make_batch(const Dataset& ds, std::span<const std::int64_t> indices);
Batch full_batch(const Dataset& ds);

}  // namespace fisherprune
