#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fisherprune/data.hpp"
#include "fisherprune/model.hpp"

namespace fisherprune {

struct GradVector {
    std::vector<double> values;
    std::int64_t batch_count = 0;
    std::int64_t dim() const { return static_cast<std::int64_t>(values.size()); }
};

enum class FimEstimator { per_sample, batch_wise };

struct FimDiagonal {
    std::vector<double> values;  // nonnegative, indexed like the flat parameter vector
    std::int64_t batch_size = 0;
    std::int64_t batch_count = 0;
    FimEstimator kind = FimEstimator::batch_wise;
    std::int64_t dim() const { return static_cast<std::int64_t>(values.size()); }
};

// Seeded shuffle, contiguous equal-size batches, trailing short batch dropped.
// InvalidArgument if batch_size < 1 or batch_size > n.
std::vector<std::vector<std::int64_t>> partition_batches(std::int64_t n, std::int64_t batch_size,
                                                         std::uint64_t seed);

// Per batch B^k: accumulate the batch-mean gradient and its elementwise
// square, then divide both sums by the batch count.
std::pair<GradVector, FimDiagonal> accumulate_fts_inputs(
    const Model& model, const Dataset& ds,
    const std::vector<std::vector<std::int64_t>>& partition);

// mean over samples of the squared per-sample gradient
FimDiagonal fim_diag_per_sample(const Model& model, const Dataset& ds);

// exact dataset-mean gradient, computed in chunks with sample-count weights
GradVector dataset_mean_gradient(const Model& model, const Dataset& ds,
                                 std::int64_t chunk = 256);

}  // namespace fisherprune
