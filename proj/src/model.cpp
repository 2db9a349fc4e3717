#include "fisherprune/model.hpp"

#include <cmath>
#include <sstream>

#include "fisherprune/errors.hpp"
#include "fisherprune/rng.hpp"

namespace fisherprune {

namespace {

struct ParamTensorInfo {
    std::string layer_name;
    SegmentKind kind;
    std::vector<std::int64_t> shape;
    std::int64_t fan_in;  // 0 for biases
};

// One entry per parameter tensor, in layer order, weight before bias.
std::vector<ParamTensorInfo> enumerate_params(const ArchitectureSpec& spec) {
    std::vector<ParamTensorInfo> out;
    int linear_idx = 0, conv_idx = 0, res_idx = 0;
    for (const auto& layer : spec.layers) {
        if (const auto* lin = std::get_if<LinearSpec>(&layer)) {
            const std::string name = "fc" + std::to_string(++linear_idx);
            out.push_back({name, SegmentKind::weight, {lin->out, lin->in}, lin->in});
            if (lin->bias) out.push_back({name, SegmentKind::bias, {lin->out}, 0});
        } else if (const auto* cv = std::get_if<Conv2dSpec>(&layer)) {
            const std::string name = "conv" + std::to_string(++conv_idx);
            out.push_back({name, SegmentKind::weight,
                           {cv->out_ch, cv->in_ch, cv->k, cv->k}, cv->in_ch * cv->k * cv->k});
            if (cv->bias) out.push_back({name, SegmentKind::bias, {cv->out_ch}, 0});
        } else if (const auto* rs = std::get_if<ResidualConv2dSpec>(&layer)) {
            const std::string name = "res" + std::to_string(++res_idx);
            out.push_back({name, SegmentKind::weight,
                           {rs->ch, rs->ch, rs->k, rs->k}, rs->ch * rs->k * rs->k});
            out.push_back({name, SegmentKind::bias, {rs->ch}, 0});
        }
    }
    return out;
}

}  // namespace

ArchitectureSpec make_mlp(const std::string& id, std::int64_t input_dim,
                          const std::vector<std::int64_t>& hidden, std::int32_t classes) {
    ArchitectureSpec spec;
    spec.id = id;
    spec.input_shape = {input_dim};
    spec.class_count = classes;
    std::int64_t prev = input_dim;
    for (auto h : hidden) {
        spec.layers.emplace_back(LinearSpec{prev, h, true});
        spec.layers.emplace_back(ReluSpec{});
        prev = h;
    }
    spec.layers.emplace_back(LinearSpec{prev, classes, true});
    return spec;
}

ArchitectureSpec lookup_architecture(const std::string& id) {
    if (id == "mlp-small") return make_mlp(id, 784, {32}, 10);
    // widths rise toward the output so the input layer is the one whose
    // per-weight scores sit lowest at initialization
    if (id == "mlp-deep-narrow")
        return make_mlp(id, 784, {32, 16, 48, 16, 96, 16, 256, 16}, 10);
    if (id == "convnet-small") {
        ArchitectureSpec spec;
        spec.id = id;
        spec.input_shape = {3, 32, 32};
        spec.class_count = 10;
        spec.layers.emplace_back(Conv2dSpec{3, 8, 3, 1, true});
        spec.layers.emplace_back(ReluSpec{});
        spec.layers.emplace_back(MaxPool2Spec{});
        spec.layers.emplace_back(ResidualConv2dSpec{8, 3, 1});
        spec.layers.emplace_back(MaxPool2Spec{});
        spec.layers.emplace_back(FlattenSpec{});
        spec.layers.emplace_back(LinearSpec{8 * 8 * 8, 32, true});
        spec.layers.emplace_back(ReluSpec{});
        spec.layers.emplace_back(LinearSpec{32, 10, true});
        return spec;
    }
    if (id.rfind("mlp:", 0) == 0) {
        std::vector<std::int64_t> dims;
        std::stringstream ss(id.substr(4));
        std::string tok;
        while (std::getline(ss, tok, '-')) {
            try {
                dims.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                throw UnknownArchitecture("bad inline mlp spec: " + id);
            }
        }
        if (dims.size() < 2) throw UnknownArchitecture("inline mlp needs at least in-out: " + id);
        std::vector<std::int64_t> hidden(dims.begin() + 1, dims.end() - 1);
        return make_mlp(id, dims.front(), hidden, static_cast<std::int32_t>(dims.back()));
    }
    throw UnknownArchitecture("unknown architecture: " + id);
}

std::vector<std::string> registered_architectures() {
    return {"mlp-small", "mlp-deep-narrow", "convnet-small"};
}

Model::Model(ArchitectureSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    const auto params = enumerate_params(spec_);
    std::int64_t offset = 0;
    for (const auto& p : params) {
        LayerSegment seg;
        seg.layer_name = p.layer_name;
        seg.offset = offset;
        seg.length = Tensor::numel_of(p.shape);
        seg.kind = p.kind;
        seg.prunable = (p.kind == SegmentKind::weight);
        segments_.push_back(seg);
        offset += seg.length;
    }
    values_.assign(static_cast<std::size_t>(offset), 0.0);

    // Kaiming-uniform weights from a single sequential stream; biases stay zero.
    Rng rng(seed);
    for (const auto& seg : segments_) {
        if (seg.kind != SegmentKind::weight) continue;
        std::int64_t fan_in = 0;
        for (const auto& p : params)
            if (p.layer_name == seg.layer_name && p.kind == SegmentKind::weight) fan_in = p.fan_in;
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < seg.length; ++i)
            values_[static_cast<std::size_t>(seg.offset + i)] = rng.uniform(-bound, bound);
    }
}

ParamVector Model::flatten() const { return ParamVector{values_, segments_}; }

void Model::assign(const ParamVector& pv) {
    if (pv.dim() != param_count())
        throw LengthMismatch("parameter vector length does not match model");
    values_ = pv.values;
}

void Model::assign_values(std::span<const double> v) {
    if (static_cast<std::int64_t>(v.size()) != param_count())
        throw LengthMismatch("parameter vector length does not match model");
    values_.assign(v.begin(), v.end());
}

NodeId Model::build_forward(Graph& g, const Batch& batch) const {
    if (batch.size() == 0) throw InvalidArgument("empty batch");
    const Tensor& images = batch.images;
    if (images.dim(0) != batch.size())
        throw ShapeMismatch("image count does not match label count");

    NodeId x;
    if (spec_.input_shape.size() == 1) {
        const std::int64_t D = spec_.input_shape[0];
        if (images.numel() / images.dim(0) != D)
            throw ShapeMismatch("batch feature count does not match model input");
        x = g.input(images.reshaped({images.dim(0), D}));
    } else {
        if (images.rank() != 4 || images.dim(1) != spec_.input_shape[0] ||
            images.dim(2) != spec_.input_shape[1] || images.dim(3) != spec_.input_shape[2])
            throw ShapeMismatch("batch image shape does not match model input");
        x = g.input(images);
    }

    // walk segments in lock-step with the layer list
    std::size_t seg_idx = 0;
    auto next_param = [&](const std::vector<std::int64_t>& shape) {
        const LayerSegment& seg = segments_.at(seg_idx++);
        return g.param(std::span<const double>(values_.data() + seg.offset,
                                               static_cast<std::size_t>(seg.length)),
                       shape, seg.offset);
    };

    for (const auto& layer : spec_.layers) {
        if (const auto* lin = std::get_if<LinearSpec>(&layer)) {
            NodeId w = next_param({lin->out, lin->in});
            x = g.matmul(x, w);
            if (lin->bias) x = g.add_bias(x, next_param({lin->out}));
        } else if (std::get_if<ReluSpec>(&layer)) {
            x = g.relu(x);
        } else if (const auto* cv = std::get_if<Conv2dSpec>(&layer)) {
            NodeId w = next_param({cv->out_ch, cv->in_ch, cv->k, cv->k});
            x = g.conv2d(x, w, cv->pad);
            if (cv->bias) x = g.add_bias(x, next_param({cv->out_ch}));
        } else if (std::get_if<MaxPool2Spec>(&layer)) {
            x = g.maxpool2(x);
        } else if (std::get_if<FlattenSpec>(&layer)) {
            x = g.flatten(x);
        } else if (const auto* rs = std::get_if<ResidualConv2dSpec>(&layer)) {
            NodeId w = next_param({rs->ch, rs->ch, rs->k, rs->k});
            NodeId t = g.conv2d(x, w, rs->pad);
            t = g.add_bias(t, next_param({rs->ch}));
            t = g.relu(t);
            x = g.add(x, t);
        }
    }
    return x;
}

ForwardResult Model::forward_loss(const Batch& batch) const {
    ForwardResult fr;
    NodeId logits = build_forward(fr.graph, batch);
    fr.root = fr.graph.softmax_cross_entropy(logits, batch.labels);
    fr.loss = fr.graph.scalar(fr.root);
    fr.param_dim = param_count();
    if (!std::isfinite(fr.loss)) throw NonFiniteLoss("loss is not finite");
    return fr;
}

Tensor Model::logits(const Batch& batch) const {
    Graph g;
    NodeId out = build_forward(g, batch);
    return g.value(out);
}

Model build_model(const std::string& arch_id, std::uint64_t seed) {
    return Model(lookup_architecture(arch_id), seed);
}

Model build_model(const ArchitectureSpec& spec, std::uint64_t seed) { return Model(spec, seed); }

std::vector<double> backward(ForwardResult& fr) {
    return fr.graph.backward(fr.root, fr.param_dim);
}

}  // namespace fisherprune
