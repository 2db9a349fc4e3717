#include "fisherprune/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "fisherprune/errors.hpp"

namespace fisherprune {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw ShapeMismatch(msg);
}

}  // namespace

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(Tensor x) {
    Node n;
    n.op = OpKind::input;
    n.value = std::move(x);
    return push(std::move(n));
}

NodeId Graph::param(std::span<const double> values, std::vector<std::int64_t> shape,
                    std::int64_t offset) {
    require(Tensor::numel_of(shape) == static_cast<std::int64_t>(values.size()),
            "param shape does not match value count");
    Node n;
    n.op = OpKind::param;
    n.value = Tensor(std::move(shape), std::vector<double>(values.begin(), values.end()));
    n.param_offset = offset;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId x, NodeId w) {
    const Tensor& xv = at(x).value;
    const Tensor& wv = at(w).value;
    require(xv.rank() == 2 && wv.rank() == 2, "matmul expects rank-2 operands");
    require(xv.dim(1) == wv.dim(1), "matmul inner dimensions differ");
    const std::int64_t B = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
    Tensor out = Tensor::zeros({B, O});
    const double* xd = xv.data();
    const double* wd = wv.data();
    double* od = out.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t o = 0; o < O; ++o) {
            const double* xr = xd + b * I;
            const double* wr = wd + o * I;
            double acc = 0.0;
            for (std::int64_t i = 0; i < I; ++i) acc += xr[i] * wr[i];
            od[b * O + o] = acc;
        }
    }
    Node n;
    n.op = OpKind::matmul;
    n.a = x;
    n.b = w;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Graph::add_bias(NodeId x, NodeId bias) {
    const Tensor& xv = at(x).value;
    const Tensor& bv = at(bias).value;
    require(bv.rank() == 1, "bias must be rank-1");
    Tensor out = xv;
    if (xv.rank() == 2) {
        const std::int64_t B = xv.dim(0), O = xv.dim(1);
        require(bv.dim(0) == O, "bias length must match feature dim");
        double* od = out.data();
        const double* bd = bv.data();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t o = 0; o < O; ++o) od[b * O + o] += bd[o];
    } else if (xv.rank() == 4) {
        const std::int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
        require(bv.dim(0) == C, "bias length must match channel dim");
        double* od = out.data();
        const double* bd = bv.data();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t c = 0; c < C; ++c) {
                double* p = od + (b * C + c) * HW;
                for (std::int64_t i = 0; i < HW; ++i) p[i] += bd[c];
            }
    } else {
        throw ShapeMismatch("add_bias expects rank-2 or rank-4 input");
    }
    Node n;
    n.op = OpKind::add_bias;
    n.a = x;
    n.b = bias;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId w, int pad) {
    const Tensor& xv = at(x).value;
    const Tensor& wv = at(w).value;
    require(xv.rank() == 4 && wv.rank() == 4, "conv2d expects rank-4 operands");
    require(xv.dim(1) == wv.dim(1), "conv2d channel mismatch");
    require(wv.dim(2) == wv.dim(3), "conv2d kernel must be square");
    const std::int64_t B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::int64_t Co = wv.dim(0), K = wv.dim(2);
    const std::int64_t Ho = H + 2 * pad - K + 1, Wo = W + 2 * pad - K + 1;
    require(Ho >= 1 && Wo >= 1, "conv2d output would be empty");
    Tensor out = Tensor::zeros({B, Co, Ho, Wo});
    const double* xd = xv.data();
    const double* wd = wv.data();
    double* od = out.data();
#pragma omp parallel for schedule(static) collapse(2)
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t co = 0; co < Co; ++co) {
            double* orow = od + (b * Co + co) * Ho * Wo;
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::int64_t ci = 0; ci < Ci; ++ci) {
                        const double* xch = xd + (b * Ci + ci) * H * W;
                        const double* wch = wd + ((co * Ci + ci) * K) * K;
                        for (std::int64_t kh = 0; kh < K; ++kh) {
                            const std::int64_t ih = oh + kh - pad;
                            if (ih < 0 || ih >= H) continue;
                            for (std::int64_t kw = 0; kw < K; ++kw) {
                                const std::int64_t iw = ow + kw - pad;
                                if (iw < 0 || iw >= W) continue;
                                acc += xch[ih * W + iw] * wch[kh * K + kw];
                            }
                        }
                    }
                    orow[oh * Wo + ow] = acc;
                }
            }
        }
    }
    Node n;
    n.op = OpKind::conv2d;
    n.a = x;
    n.b = w;
    n.pad = pad;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
    const Tensor& xv = at(x).value;
    Tensor out = xv;
    for (auto& v : out.values())
        if (v < 0.0) v = 0.0;
    Node n;
    n.op = OpKind::relu;
    n.a = x;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Graph::maxpool2(NodeId x) {
    const Tensor& xv = at(x).value;
    require(xv.rank() == 4, "maxpool2 expects rank-4 input");
    const std::int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    require(H % 2 == 0 && W % 2 == 0, "maxpool2 expects even spatial dims");
    const std::int64_t Ho = H / 2, Wo = W / 2;
    Tensor out = Tensor::zeros({B, C, Ho, Wo});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
    const double* xd = xv.data();
    double* od = out.data();
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const double* xch = xd + bc * H * W;
        double* och = od + bc * Ho * Wo;
        std::int64_t* ach = argmax.data() + bc * Ho * Wo;
        for (std::int64_t oh = 0; oh < Ho; ++oh) {
            for (std::int64_t ow = 0; ow < Wo; ++ow) {
                std::int64_t best = (2 * oh) * W + 2 * ow;
                double bv = xch[best];
                const std::int64_t cand[3] = {(2 * oh) * W + 2 * ow + 1,
                                              (2 * oh + 1) * W + 2 * ow,
                                              (2 * oh + 1) * W + 2 * ow + 1};
                for (std::int64_t idx : cand) {
                    if (xch[idx] > bv) {
                        bv = xch[idx];
                        best = idx;
                    }
                }
                och[oh * Wo + ow] = bv;
                ach[oh * Wo + ow] = bc * H * W + best;
            }
        }
    }
    Node n;
    n.op = OpKind::maxpool2;
    n.a = x;
    n.value = std::move(out);
    n.argmax = std::move(argmax);
    return push(std::move(n));
}

NodeId Graph::add(NodeId x, NodeId y) {
    const Tensor& xv = at(x).value;
    const Tensor& yv = at(y).value;
    require(xv.same_shape(yv), "add expects matching shapes");
    Tensor out = xv;
    const double* yd = yv.data();
    double* od = out.data();
    const std::int64_t n_ = xv.numel();
    for (std::int64_t i = 0; i < n_; ++i) od[i] += yd[i];
    Node n;
    n.op = OpKind::add;
    n.a = x;
    n.b = y;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Graph::flatten(NodeId x) {
    const Tensor& xv = at(x).value;
    require(xv.rank() >= 2, "flatten expects rank >= 2");
    const std::int64_t B = xv.dim(0);
    Node n;
    n.op = OpKind::flatten;
    n.a = x;
    n.value = xv.reshaped({B, xv.numel() / B});
    return push(std::move(n));
}

NodeId Graph::mean_all(NodeId x) {
    const Tensor& xv = at(x).value;
    double acc = 0.0;
    for (double v : xv.values()) acc += v;
    Node n;
    n.op = OpKind::mean_all;
    n.a = x;
    n.value = Tensor::scalar(acc / static_cast<double>(xv.numel()));
    return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double alpha) {
    Tensor out = at(x).value;
    for (auto& v : out.values()) v *= alpha;
    Node n;
    n.op = OpKind::scale;
    n.a = x;
    n.alpha = alpha;
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, const std::vector<std::int32_t>& labels) {
    const Tensor& lv = at(logits).value;
    require(lv.rank() == 2, "softmax_cross_entropy expects rank-2 logits");
    const std::int64_t B = lv.dim(0), C = lv.dim(1);
    require(static_cast<std::int64_t>(labels.size()) == B, "label count must match batch");
    for (auto y : labels)
        require(y >= 0 && y < C, "label out of range");
    Tensor probs = Tensor::zeros({B, C});
    const double* ld = lv.data();
    double* pd = probs.data();
    double loss = 0.0;  // sequential left-to-right over the batch
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = ld + b * C;
        double mx = row[0];
        for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (std::int64_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
        const double logz = std::log(z) + mx;
        for (std::int64_t c = 0; c < C; ++c) pd[b * C + c] = std::exp(row[c] - logz);
        loss += logz - row[labels[static_cast<std::size_t>(b)]];
    }
    Node n;
    n.op = OpKind::softmax_xent;
    n.a = logits;
    n.labels = labels;
    n.saved = std::move(probs);
    n.value = Tensor::scalar(loss / static_cast<double>(B));
    return push(std::move(n));
}

NodeId Graph::half_mse(NodeId pred, Tensor target) {
    const Tensor& pv = at(pred).value;
    require(pv.same_shape(target), "half_mse target shape mismatch");
    require(pv.rank() >= 1, "half_mse expects at least rank-1");
    const std::int64_t B = pv.dim(0);
    const double* pd = pv.data();
    const double* td = target.data();
    double loss = 0.0;
    for (std::int64_t i = 0; i < pv.numel(); ++i) {
        const double d = pd[i] - td[i];
        loss += 0.5 * d * d;
    }
    Node n;
    n.op = OpKind::half_mse;
    n.a = pred;
    n.saved = std::move(target);
    n.value = Tensor::scalar(loss / static_cast<double>(B));
    return push(std::move(n));
}

double Graph::scalar(NodeId id) const {
    const Tensor& v = at(id).value;
    if (v.numel() != 1) throw ShapeMismatch("node is not a scalar");
    return v[0];
}

std::vector<double> Graph::backward(NodeId root, std::int64_t param_dim) {
    if (consumed_) throw GraphConsumed("backward already ran on this graph");
    consumed_ = true;
    if (at(root).value.numel() != 1)
        throw ShapeMismatch("backward root must be scalar");

    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> touched(nodes_.size(), false);
    auto grad_of = [&](NodeId id) -> Tensor& {
        auto i = static_cast<std::size_t>(id);
        if (!touched[i]) {
            grads[i] = Tensor::zeros(nodes_[i].value.shape());
            touched[i] = true;
        }
        return grads[i];
    };

    std::vector<double> param_grad(static_cast<std::size_t>(param_dim), 0.0);
    grad_of(root)[0] = 1.0;

    for (NodeId id = root; id >= 0; --id) {
        const auto i = static_cast<std::size_t>(id);
        if (!touched[i]) continue;
        const Node& n = nodes_[i];
        const Tensor& g = grads[i];
        switch (n.op) {
            case OpKind::input:
                break;
            case OpKind::param: {
                if (n.param_offset >= 0) {
                    const double* gd = g.data();
                    for (std::int64_t k = 0; k < g.numel(); ++k)
                        param_grad[static_cast<std::size_t>(n.param_offset + k)] += gd[k];
                }
                break;
            }
            case OpKind::matmul: {
                const Tensor& xv = at(n.a).value;
                const Tensor& wv = at(n.b).value;
                const std::int64_t B = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
                Tensor& gx = grad_of(n.a);
                Tensor& gw = grad_of(n.b);
                const double* gd = g.data();
                const double* xd = xv.data();
                const double* wd = wv.data();
                {
                    double* gxd = gx.data();
#pragma omp parallel for schedule(static)
                    for (std::int64_t b = 0; b < B; ++b)
                        for (std::int64_t o = 0; o < O; ++o) {
                            const double gv = gd[b * O + o];
                            if (gv == 0.0) continue;
                            const double* wr = wd + o * I;
                            double* gr = gxd + b * I;
                            for (std::int64_t k = 0; k < I; ++k) gr[k] += gv * wr[k];
                        }
                }
                {
                    double* gwd = gw.data();
#pragma omp parallel for schedule(static)
                    for (std::int64_t o = 0; o < O; ++o)
                        for (std::int64_t b = 0; b < B; ++b) {
                            const double gv = gd[b * O + o];
                            if (gv == 0.0) continue;
                            const double* xr = xd + b * I;
                            double* gr = gwd + o * I;
                            for (std::int64_t k = 0; k < I; ++k) gr[k] += gv * xr[k];
                        }
                }
                break;
            }
            case OpKind::add_bias: {
                Tensor& gx = grad_of(n.a);
                Tensor& gb = grad_of(n.b);
                const double* gd = g.data();
                double* gxd = gx.data();
                for (std::int64_t k = 0; k < g.numel(); ++k) gxd[k] += gd[k];
                const Tensor& xv = at(n.a).value;
                double* gbd = gb.data();
                if (xv.rank() == 2) {
                    const std::int64_t B = xv.dim(0), O = xv.dim(1);
                    for (std::int64_t b = 0; b < B; ++b)
                        for (std::int64_t o = 0; o < O; ++o) gbd[o] += gd[b * O + o];
                } else {
                    const std::int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
                    for (std::int64_t b = 0; b < B; ++b)
                        for (std::int64_t c = 0; c < C; ++c) {
                            const double* p = gd + (b * C + c) * HW;
                            double acc = 0.0;
                            for (std::int64_t k = 0; k < HW; ++k) acc += p[k];
                            gbd[c] += acc;
                        }
                }
                break;
            }
            case OpKind::conv2d: {
                const Tensor& xv = at(n.a).value;
                const Tensor& wv = at(n.b).value;
                const std::int64_t B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
                const std::int64_t Co = wv.dim(0), K = wv.dim(2);
                const std::int64_t Ho = n.value.dim(2), Wo = n.value.dim(3);
                const int pad = n.pad;
                Tensor& gx = grad_of(n.a);
                Tensor& gw = grad_of(n.b);
                const double* gd = g.data();
                const double* xd = xv.data();
                const double* wd = wv.data();
                {
                    double* gwd = gw.data();
#pragma omp parallel for schedule(static) collapse(2)
                    for (std::int64_t co = 0; co < Co; ++co)
                        for (std::int64_t ci = 0; ci < Ci; ++ci) {
                            double* gwch = gwd + ((co * Ci + ci) * K) * K;
                            for (std::int64_t b = 0; b < B; ++b) {
                                const double* gch = gd + (b * Co + co) * Ho * Wo;
                                const double* xch = xd + (b * Ci + ci) * H * W;
                                for (std::int64_t oh = 0; oh < Ho; ++oh)
                                    for (std::int64_t ow = 0; ow < Wo; ++ow) {
                                        const double gv = gch[oh * Wo + ow];
                                        if (gv == 0.0) continue;
                                        for (std::int64_t kh = 0; kh < K; ++kh) {
                                            const std::int64_t ih = oh + kh - pad;
                                            if (ih < 0 || ih >= H) continue;
                                            for (std::int64_t kw = 0; kw < K; ++kw) {
                                                const std::int64_t iw = ow + kw - pad;
                                                if (iw < 0 || iw >= W) continue;
                                                gwch[kh * K + kw] += gv * xch[ih * W + iw];
                                            }
                                        }
                                    }
                            }
                        }
                }
                {
                    double* gxd = gx.data();
#pragma omp parallel for schedule(static)
                    for (std::int64_t b = 0; b < B; ++b)
                        for (std::int64_t co = 0; co < Co; ++co) {
                            const double* gch = gd + (b * Co + co) * Ho * Wo;
                            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                double* gxch = gxd + (b * Ci + ci) * H * W;
                                const double* wch = wd + ((co * Ci + ci) * K) * K;
                                for (std::int64_t oh = 0; oh < Ho; ++oh)
                                    for (std::int64_t ow = 0; ow < Wo; ++ow) {
                                        const double gv = gch[oh * Wo + ow];
                                        if (gv == 0.0) continue;
                                        for (std::int64_t kh = 0; kh < K; ++kh) {
                                            const std::int64_t ih = oh + kh - pad;
                                            if (ih < 0 || ih >= H) continue;
                                            for (std::int64_t kw = 0; kw < K; ++kw) {
                                                const std::int64_t iw = ow + kw - pad;
                                                if (iw < 0 || iw >= W) continue;
                                                gxch[ih * W + iw] += gv * wch[kh * K + kw];
                                            }
                                        }
                                    }
                            }
                        }
                }
                break;
            }
            case OpKind::relu: {
                Tensor& gx = grad_of(n.a);
                const Tensor& xv = at(n.a).value;
                const double* gd = g.data();
                const double* xd = xv.data();
                double* gxd = gx.data();
                for (std::int64_t k = 0; k < g.numel(); ++k)
                    if (xd[k] > 0.0) gxd[k] += gd[k];
                break;
            }
            case OpKind::maxpool2: {
                Tensor& gx = grad_of(n.a);
                double* gxd = gx.data();
                const double* gd = g.data();
                for (std::int64_t k = 0; k < g.numel(); ++k)
                    gxd[n.argmax[static_cast<std::size_t>(k)]] += gd[k];
                break;
            }
            case OpKind::add: {
                Tensor& gx = grad_of(n.a);
                Tensor& gy = grad_of(n.b);
                const double* gd = g.data();
                double* gxd = gx.data();
                double* gyd = gy.data();
                for (std::int64_t k = 0; k < g.numel(); ++k) {
                    gxd[k] += gd[k];
                    gyd[k] += gd[k];
                }
                break;
            }
            case OpKind::flatten: {
                Tensor& gx = grad_of(n.a);
                const double* gd = g.data();
                double* gxd = gx.data();
                for (std::int64_t k = 0; k < g.numel(); ++k) gxd[k] += gd[k];
                break;
            }
            case OpKind::mean_all: {
                Tensor& gx = grad_of(n.a);
                const double gv = g[0] / static_cast<double>(at(n.a).value.numel());
                for (auto& v : gx.values()) v += gv;
                break;
            }
            case OpKind::scale: {
                Tensor& gx = grad_of(n.a);
                const double* gd = g.data();
                double* gxd = gx.data();
                for (std::int64_t k = 0; k < g.numel(); ++k) gxd[k] += n.alpha * gd[k];
                break;
            }
            case OpKind::softmax_xent: {
                Tensor& gx = grad_of(n.a);
                const Tensor& probs = n.saved;
                const std::int64_t B = probs.dim(0), C = probs.dim(1);
                const double gv = g[0] / static_cast<double>(B);
                const double* pd = probs.data();
                double* gxd = gx.data();
                for (std::int64_t b = 0; b < B; ++b) {
                    for (std::int64_t c = 0; c < C; ++c) gxd[b * C + c] += gv * pd[b * C + c];
                    gxd[b * C + n.labels[static_cast<std::size_t>(b)]] -= gv;
                }
                break;
            }
            case OpKind::half_mse: {
                Tensor& gx = grad_of(n.a);
                const Tensor& pv = at(n.a).value;
                const std::int64_t B = pv.dim(0);
                const double gv = g[0] / static_cast<double>(B);
                const double* pd = pv.data();
                const double* td = n.saved.data();
                double* gxd = gx.data();
                for (std::int64_t k = 0; k < pv.numel(); ++k) gxd[k] += gv * (pd[k] - td[k]);
                break;
            }
        }
    }
    return param_grad;
}

}  // namespace fisherprune
