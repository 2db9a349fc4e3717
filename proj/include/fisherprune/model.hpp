#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fisherprune/autodiff.hpp"
#include "fisherprune/tensor.hpp"

namespace fisherprune {

enum class SegmentKind { weight, bias };

// Contiguous slice of the flat parameter vector belonging to one parameter
// tensor. Bias segments are never prunable.
struct LayerSegment {
    std::string layer_name;
    std::int64_t offset = 0;
    std::int64_t length = 0;
    SegmentKind kind = SegmentKind::weight;
    bool prunable = true;
};

struct ParamVector {
    std::vector<double> values;
    std::vector<LayerSegment> segments;
    std::int64_t dim() const { return static_cast<std::int64_t>(values.size()); }
};

// layer specs
struct LinearSpec {
    std::int64_t in = 0, out = 0;
    bool bias = true;
};
struct ReluSpec {};
struct Conv2dSpec {
    std::int64_t in_ch = 0, out_ch = 0, k = 3;
    int pad = 1;
    bool bias = true;
};
struct MaxPool2Spec {};
struct FlattenSpec {};
// x + relu(conv(x)); channel count preserved, the skip is parameter-free
struct ResidualConv2dSpec {
    std::int64_t ch = 0;
    std::int64_t k = 3;
    int pad = 1;
};

using LayerSpec =
    std::variant<LinearSpec, ReluSpec, Conv2dSpec, MaxPool2Spec, FlattenSpec, ResidualConv2dSpec>;

struct ArchitectureSpec {
    std::string id;
    std::vector<std::int64_t> input_shape;  // {D} for vector input, {C,H,W} for images
    std::int32_t class_count = 10;
    std::vector<LayerSpec> layers;
};

// Registered names: mlp-small, mlp-deep-narrow, convnet-small.
// "mlp:<in>-<h1>-...-<out>" builds an inline relu MLP.
ArchitectureSpec lookup_architecture(const std::string& id);
std::vector<std::string> registered_architectures();
ArchitectureSpec make_mlp(const std::string& id, std::int64_t input_dim,
                          const std::vector<std::int64_t>& hidden, std::int32_t classes);

struct Batch {
    Tensor images;  // [B,C,H,W] or [B,D]
    std::vector<std::int32_t> labels;
    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

struct ForwardResult {
    double loss = 0.0;
    Graph graph;
    NodeId root = -1;
    std::int64_t param_dim = 0;
};

class Model {
public:
    Model(ArchitectureSpec spec, std::uint64_t seed);

    const ArchitectureSpec& spec() const { return spec_; }
    const std::string& architecture() const { return spec_.id; }
    std::int32_t class_count() const { return spec_.class_count; }
    std::int64_t param_count() const { return static_cast<std::int64_t>(values_.size()); }
    const std::vector<LayerSegment>& segments() const { return segments_; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    ParamVector flatten() const;
    void assign(const ParamVector& pv);
    void assign_values(std::span<const double> v);

    // mean softmax cross-entropy over the batch, with the tape for backward
    ForwardResult forward_loss(const Batch& batch) const;
    Tensor logits(const Batch& batch) const;

private:
    NodeId build_forward(Graph& g, const Batch& batch) const;

    ArchitectureSpec spec_;
    std::vector<double> values_;
    std::vector<LayerSegment> segments_;
};

Model build_model(const std::string& arch_id, std::uint64_t seed);
Model build_model(const ArchitectureSpec& spec, std::uint64_t seed);

// gradient of fr's loss w.r.t. the flat parameter vector
std::vector<double> backward(ForwardResult& fr);

}  // namespace fisherprune
