#include "fisherprune/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fisherprune/criteria.hpp"
#include "fisherprune/errors.hpp"

namespace fisherprune {

ModelBatchObjective::ModelBatchObjective(Model& model, Batch batch)
    : model_(model), batch_(std::move(batch)),
      saved_(model.values().begin(), model.values().end()) {}

ModelBatchObjective::~ModelBatchObjective() { model_.assign_values(saved_); }

double ModelBatchObjective::loss_at(std::span<const double> w) {
    model_.assign_values(w);
    return model_.forward_loss(batch_).loss;
}

std::vector<double> finite_diff_grad(Objective& obj, std::span<const double> w, double eps) {
    std::vector<std::int64_t> coords(w.size());
    std::iota(coords.begin(), coords.end(), 0);
    return finite_diff_grad_at(obj, w, eps, coords);
}

std::vector<double> finite_diff_grad_at(Objective& obj, std::span<const double> w, double eps,
                                        std::span<const std::int64_t> coords) {
    if (eps <= 0.0) throw InvalidArgument("finite difference step must be > 0");
    std::vector<double> probe(w.begin(), w.end());
    std::vector<double> grad(coords.size(), 0.0);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto q = static_cast<std::size_t>(coords[i]);
        const double orig = probe[q];
        probe[q] = orig + eps;
        const double lp = obj.loss_at(probe);
        probe[q] = orig - eps;
        const double lm = obj.loss_at(probe);
        probe[q] = orig;
        grad[i] = (lp - lm) / (2.0 * eps);
        if (!std::isfinite(grad[i])) throw NonFiniteLoss("non-finite finite-difference gradient");
    }
    return grad;
}

std::vector<double> finite_diff_hessian_diag(Objective& obj, std::span<const double> w,
                                             double eps) {
    if (eps <= 0.0) throw InvalidArgument("finite difference step must be > 0");
    std::vector<double> probe(w.begin(), w.end());
    const double l0 = obj.loss_at(probe);
    std::vector<double> h(w.size(), 0.0);
    for (std::size_t q = 0; q < w.size(); ++q) {
        const double orig = probe[q];
        probe[q] = orig + eps;
        const double lp = obj.loss_at(probe);
        probe[q] = orig - eps;
        const double lm = obj.loss_at(probe);
        probe[q] = orig;
        h[q] = (lp - 2.0 * l0 + lm) / (eps * eps);
    }
    return h;
}

double true_delta_loss_remove(Objective& obj, std::span<const double> w, std::int64_t q) {
    if (q < 0 || q >= static_cast<std::int64_t>(w.size()))
        throw InvalidArgument("coordinate out of range");
    std::vector<double> probe(w.begin(), w.end());
    const double l0 = obj.loss_at(probe);
    probe[static_cast<std::size_t>(q)] = 0.0;
    return obj.loss_at(probe) - l0;
}

TaylorOrderResult taylor_order_check(Objective& obj, std::span<const double> w,
                                     std::span<const double> dw,
                                     std::span<const double> scales, double h_eps) {
    if (dw.size() != w.size()) throw LengthMismatch("direction length does not match parameters");
    const auto g = finite_diff_grad(obj, w, 1e-5);
    const auto h = finite_diff_hessian_diag(obj, w, h_eps);
    const double l0 = obj.loss_at(std::vector<double>(w.begin(), w.end()));

    TaylorOrderResult result;
    std::vector<double> probe(w.size());
    std::vector<double> scaled(dw.size());
    for (double s : scales) {
        for (std::size_t q = 0; q < w.size(); ++q) {
            scaled[q] = s * dw[q];
            probe[q] = w[q] + scaled[q];
        }
        const double true_delta = obj.loss_at(probe) - l0;
        const double model_delta = taylor_delta_loss(scaled, g, h);
        result.errors.push_back(std::abs(true_delta - model_delta));
    }
    for (std::size_t i = 0; i + 1 < result.errors.size(); ++i)
        result.ratios.push_back(result.errors[i] /
                                std::max(result.errors[i + 1], 1e-300));
    return result;
}

std::vector<std::int64_t> stratified_probe_coords(const std::vector<LayerSegment>& segments,
                                                  std::int64_t per_segment) {
    std::vector<std::int64_t> coords;
    for (const auto& seg : segments) {
        const std::int64_t take = std::min(per_segment, seg.length);
        if (take <= 0) continue;
        for (std::int64_t i = 0; i < take; ++i) {
            // even stride across the segment, first and last included
            const std::int64_t pos =
                take == 1 ? 0 : (i * (seg.length - 1)) / (take - 1);
            coords.push_back(seg.offset + pos);
        }
    }
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    return coords;
}

double max_relative_error(std::span<const double> ad, std::span<const double> fd,
                          std::span<const std::int64_t> coords) {
    double worst = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double a = ad[static_cast<std::size_t>(coords[i])];
        const double f = fd[i];
        worst = std::max(worst, std::abs(a - f) / (std::abs(f) + 1e-12));
    }
    return worst;
}

double spearman_rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw InvalidArgument("rank correlation needs two equal-length vectors of size >= 2");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size(), 0.0);
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace fisherprune
