#include "fisherprune/fim.hpp"

#include <cmath>
#include <numeric>

#include "fisherprune/errors.hpp"
#include "fisherprune/rng.hpp"

namespace fisherprune {

namespace {

std::vector<double> batch_gradient(const Model& model, const Dataset& ds,
                                   std::span<const std::int64_t> indices) {
    Batch batch = make_batch(ds, indices);
    ForwardResult fr = model.forward_loss(batch);
    auto g = backward(fr);
    for (double v : g)
        if (!std::isfinite(v)) throw NonFiniteGradient("gradient has non-finite entries");
    return g;
}

}  // namespace

std::vector<std::vector<std::int64_t>> partition_batches(std::int64_t n, std::int64_t batch_size,
                                                         std::uint64_t seed) {
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (batch_size > n) throw InvalidArgument("batch size exceeds dataset size");
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x9a9a));
    rng.shuffle(order);
    const std::int64_t b = n / batch_size;  // trailing short batch dropped
    std::vector<std::vector<std::int64_t>> batches(static_cast<std::size_t>(b));
    for (std::int64_t k = 0; k < b; ++k)
        batches[static_cast<std::size_t>(k)].assign(
            order.begin() + k * batch_size, order.begin() + (k + 1) * batch_size);
    return batches;
}

std::pair<GradVector, FimDiagonal> accumulate_fts_inputs(
    const Model& model, const Dataset& ds,
    const std::vector<std::vector<std::int64_t>>& partition) {
    if (partition.empty()) throw EmptyPartition("no batches in partition");
    for (const auto& b : partition)
        if (b.empty()) throw EmptyPartition("empty batch in partition");

    const auto d = static_cast<std::size_t>(model.param_count());
    std::vector<double> grad_sum(d, 0.0), sq_sum(d, 0.0);
    for (const auto& indices : partition) {
        const auto g = batch_gradient(model, ds, indices);
        for (std::size_t q = 0; q < d; ++q) {
            grad_sum[q] += g[q];
            sq_sum[q] += g[q] * g[q];
        }
    }
    const auto b = static_cast<double>(partition.size());
    for (std::size_t q = 0; q < d; ++q) {
        grad_sum[q] /= b;
        sq_sum[q] /= b;
    }
    GradVector gv{std::move(grad_sum), static_cast<std::int64_t>(partition.size())};
    FimDiagonal fd;
    fd.values = std::move(sq_sum);
    fd.batch_size = static_cast<std::int64_t>(partition.front().size());
    fd.batch_count = static_cast<std::int64_t>(partition.size());
    fd.kind = FimEstimator::batch_wise;
    return {std::move(gv), std::move(fd)};
}

FimDiagonal fim_diag_per_sample(const Model& model, const Dataset& ds) {
    if (ds.size() == 0) throw EmptyPartition("empty dataset");
    const auto d = static_cast<std::size_t>(model.param_count());
    std::vector<double> sq_sum(d, 0.0);
    for (std::int64_t n = 0; n < ds.size(); ++n) {
        const std::int64_t idx[1] = {n};
        const auto g = batch_gradient(model, ds, idx);
        for (std::size_t q = 0; q < d; ++q) sq_sum[q] += g[q] * g[q];
    }
    const auto n = static_cast<double>(ds.size());
    for (auto& v : sq_sum) v /= n;
    FimDiagonal fd;
    fd.values = std::move(sq_sum);
    fd.batch_size = 1;
    fd.batch_count = ds.size();
    fd.kind = FimEstimator::per_sample;
    return fd;
}

GradVector dataset_mean_gradient(const Model& model, const Dataset& ds, std::int64_t chunk) {
    if (ds.size() == 0) throw EmptyPartition("empty dataset");
    if (chunk < 1) throw InvalidArgument("chunk must be >= 1");
    const auto d = static_cast<std::size_t>(model.param_count());
    std::vector<double> acc(d, 0.0);
    const auto n = ds.size();
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < n; start += chunk) {
        const std::int64_t stop = std::min(n, start + chunk);
        std::vector<std::int64_t> indices(static_cast<std::size_t>(stop - start));
        std::iota(indices.begin(), indices.end(), start);
        const auto g = batch_gradient(model, ds, indices);
        const double w = static_cast<double>(stop - start) / static_cast<double>(n);
        for (std::size_t q = 0; q < d; ++q) acc[q] += w * g[q];
        ++batches;
    }
    return GradVector{std::move(acc), batches};
}

}  // namespace fisherprune
