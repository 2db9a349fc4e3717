#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fisherprune/tensor.hpp"

namespace fisherprune {

using NodeId = std::int32_t;

enum class OpKind {
    input,
    param,
    matmul,
    add_bias,
    conv2d,
    relu,
    maxpool2,
    add,
    flatten,
    mean_all,
    scale,
    softmax_xent,
    half_mse,
};

struct Node {
    OpKind op;
    NodeId a = -1;
    NodeId b = -1;
    Tensor value;
    std::int64_t param_offset = -1;        // param: base index into the flat vector
    double alpha = 1.0;                    // scale
    int pad = 0;                           // conv2d
    std::vector<std::int32_t> labels;      // softmax_xent
    std::vector<std::int64_t> argmax;      // maxpool2: flat input index per output
    Tensor saved;                          // softmax probabilities / mse target
};

// Operation tape. Nodes are appended in topological order (an input id must
// exist before its consumer), so the backward sweep is a single reverse pass
// that touches each node exactly once. Single-threaded per graph; kernels may
// parallelize internally over independent outputs only, which keeps every
// accumulation order fixed.
class Graph {
public:
    NodeId input(Tensor x);
    NodeId param(std::span<const double> values, std::vector<std::int64_t> shape,
                 std::int64_t offset);

    // y = x . w^T   with x: [B,I], w: [O,I] -> [B,O]
    NodeId matmul(NodeId x, NodeId w);
    // rank-2 x: bias over last dim; rank-4 x: bias over channel dim
    NodeId add_bias(NodeId x, NodeId bias);
    // x: [B,Cin,H,W], w: [Cout,Cin,k,k], stride 1, zero padding
    NodeId conv2d(NodeId x, NodeId w, int pad);
    NodeId relu(NodeId x);
    // 2x2 window, stride 2; ties resolved to the first element in scan order
    NodeId maxpool2(NodeId x);
    NodeId add(NodeId x, NodeId y);
    // [B,...] -> [B, rest]
    NodeId flatten(NodeId x);
    NodeId mean_all(NodeId x);
    NodeId scale(NodeId x, double alpha);
    // logits: [B,C]; loss = (1/B) sum_n -log softmax(logits_n)[y_n]
    NodeId softmax_cross_entropy(NodeId logits, const std::vector<std::int32_t>& labels);
    // loss = (1/B) sum_n 0.5 * ||pred_n - target_n||^2
    NodeId half_mse(NodeId pred, Tensor target);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    double scalar(NodeId id) const;
    std::size_t node_count() const { return nodes_.size(); }

    // d(root)/d(params) as a flat vector of length param_dim.
    // One shot: a second call on the same graph raises GraphConsumed.
    std::vector<double> backward(NodeId root, std::int64_t param_dim);

private:
    NodeId push(Node n);
    const Node& at(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace fisherprune
