#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fisherprune/criteria.hpp"
#include "fisherprune/model.hpp"

namespace fisherprune {

struct PruneMask {
    std::vector<std::uint8_t> bits;  // 1 = retained
    double target_sparsity = 0.0;

    std::int64_t dim() const { return static_cast<std::int64_t>(bits.size()); }
    std::int64_t retained_count() const;
    double density() const;  // sum(bits) / d
};

struct CollapseReport {
    struct SegmentStat {
        std::string layer_name;
        std::int64_t retained = 0;
        std::int64_t total = 0;
        double retention() const {
            return total == 0 ? 1.0 : static_cast<double>(retained) / static_cast<double>(total);
        }
    };
    std::vector<SegmentStat> weight_segments;
    std::vector<std::string> collapsed_layers;  // weight segments with zero retained
    bool collapsed = false;
    double min_layer_retention = 1.0;
};

// Keep the top round((1-p) * d_prunable) prunable parameters by descending
// score, ties broken by ascending index. Non-prunable segments are always
// retained.
PruneMask build_mask(const ScoreVector& scores, double p,
                     const std::vector<LayerSegment>& segments);

// Diagnostic variant: the same quota applied within each prunable segment.
PruneMask build_mask_layerwise(const ScoreVector& scores, double p,
                               const std::vector<LayerSegment>& segments);

// Hadamard product: masked coordinates become exactly zero.
void apply_mask(Model& model, const PruneMask& mask);
void apply_mask(std::span<double> values, const PruneMask& mask);

CollapseReport detect_layer_collapse(const PruneMask& mask,
                                     const std::vector<LayerSegment>& segments);

}  // namespace fisherprune
