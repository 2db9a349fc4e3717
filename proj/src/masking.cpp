#include "fisherprune/masking.hpp"

#include <algorithm>
#include <cmath>

#include "fisherprune/errors.hpp"

namespace fisherprune {

namespace {

std::int64_t round_half_up(double x) {
    return static_cast<std::int64_t>(std::floor(x + 0.5));
}

// top-k of `candidates` by (score desc, index asc), marked into bits
void retain_top_k(std::vector<std::int64_t>& candidates, const std::vector<double>& s,
                  std::int64_t k, std::vector<std::uint8_t>& bits) {
    std::sort(candidates.begin(), candidates.end(), [&](std::int64_t a, std::int64_t b) {
        const double sa = s[static_cast<std::size_t>(a)], sb = s[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    for (std::int64_t i = 0; i < k && i < static_cast<std::int64_t>(candidates.size()); ++i)
        bits[static_cast<std::size_t>(candidates[static_cast<std::size_t>(i)])] = 1;
}

}  // namespace

std::int64_t PruneMask::retained_count() const {
    std::int64_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

double PruneMask::density() const {
    return bits.empty() ? 0.0
                        : static_cast<double>(retained_count()) / static_cast<double>(bits.size());
}

PruneMask build_mask(const ScoreVector& scores, double p,
                     const std::vector<LayerSegment>& segments) {
    if (p < 0.0 || p >= 1.0) throw InvalidArgument("target sparsity must be in [0,1)");
    for (double v : scores.values)
        if (!std::isfinite(v)) throw InvalidArgument("scores must be finite");

    PruneMask mask;
    mask.target_sparsity = p;
    mask.bits.assign(scores.values.size(), 0);

    std::vector<std::int64_t> prunable;
    for (const auto& seg : segments) {
        if (seg.prunable) {
            for (std::int64_t i = 0; i < seg.length; ++i) prunable.push_back(seg.offset + i);
        } else {
            for (std::int64_t i = 0; i < seg.length; ++i)
                mask.bits[static_cast<std::size_t>(seg.offset + i)] = 1;
        }
    }
    const auto k = round_half_up((1.0 - p) * static_cast<double>(prunable.size()));
    retain_top_k(prunable, scores.values, k, mask.bits);
    return mask;
}

PruneMask build_mask_layerwise(const ScoreVector& scores, double p,
                               const std::vector<LayerSegment>& segments) {
    if (p < 0.0 || p >= 1.0) throw InvalidArgument("target sparsity must be in [0,1)");
    PruneMask mask;
    mask.target_sparsity = p;
    mask.bits.assign(scores.values.size(), 0);
    for (const auto& seg : segments) {
        if (!seg.prunable) {
            for (std::int64_t i = 0; i < seg.length; ++i)
                mask.bits[static_cast<std::size_t>(seg.offset + i)] = 1;
            continue;
        }
        std::vector<std::int64_t> candidates;
        for (std::int64_t i = 0; i < seg.length; ++i) candidates.push_back(seg.offset + i);
        retain_top_k(candidates, scores.values,
                     round_half_up((1.0 - p) * static_cast<double>(seg.length)), mask.bits);
    }
    return mask;
}

void apply_mask(std::span<double> values, const PruneMask& mask) {
    if (static_cast<std::int64_t>(values.size()) != mask.dim())
        throw LengthMismatch("mask length does not match parameter vector");
    for (std::size_t q = 0; q < values.size(); ++q)
        if (!mask.bits[q]) values[q] = 0.0;
}

void apply_mask(Model& model, const PruneMask& mask) { apply_mask(model.values(), mask); }

CollapseReport detect_layer_collapse(const PruneMask& mask,
                                     const std::vector<LayerSegment>& segments) {
    CollapseReport report;
    for (const auto& seg : segments) {
        if (seg.kind != SegmentKind::weight) continue;
        CollapseReport::SegmentStat stat;
        stat.layer_name = seg.layer_name;
        stat.total = seg.length;
        for (std::int64_t i = 0; i < seg.length; ++i)
            stat.retained += mask.bits[static_cast<std::size_t>(seg.offset + i)];
        report.weight_segments.push_back(stat);
    }
    report.min_layer_retention = 1.0;
    for (const auto& stat : report.weight_segments) {
        report.min_layer_retention = std::min(report.min_layer_retention, stat.retention());
        if (stat.total > 0 && stat.retained == 0) {
            report.collapsed = true;
            report.collapsed_layers.push_back(stat.layer_name);
        }
    }
    return report;
}

}  // namespace fisherprune
