#include "fisherprune/criteria.hpp"

#include <algorithm>
#include <cmath>

#include "fisherprune/errors.hpp"
#include "fisherprune/rng.hpp"

namespace fisherprune {

namespace {

void check_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw LengthMismatch(std::string("length mismatch in ") + what);
}

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NonFiniteGradient(std::string("non-finite values in ") + what);
}

}  // namespace

ModelDatasetGradient::ModelDatasetGradient(Model& model, const Dataset& ds)
    : model_(model), ds_(ds), saved_(model.values().begin(), model.values().end()) {}

ModelDatasetGradient::~ModelDatasetGradient() { model_.assign_values(saved_); }

std::vector<double> ModelDatasetGradient::gradient_at(std::span<const double> w) {
    model_.assign_values(w);
    return dataset_mean_gradient(model_, ds_).values;
}

ScoreVector score_random(std::int64_t d, std::uint64_t seed) {
    if (d < 1) throw InvalidArgument("score_random needs d >= 1");
    ScoreVector s;
    s.criterion = "random";
    s.seed = seed;
    s.values.resize(static_cast<std::size_t>(d));
    Rng rng(mix_seed(seed, 0x5c05e));
    for (auto& v : s.values) v = rng.uniform01();
    return s;
}

ScoreVector score_magnitude(std::span<const double> w) {
    ScoreVector s;
    s.criterion = "magnitude";
    s.values.reserve(w.size());
    for (double v : w) s.values.push_back(std::abs(v));
    return s;
}

ScoreVector score_gradient_norm(std::span<const double> g) {
    ScoreVector s;
    s.criterion = "gn";
    s.values.reserve(g.size());
    for (double v : g) s.values.push_back(std::abs(v));
    return s;
}

ScoreVector score_snip(std::span<const double> w, std::span<const double> g) {
    check_same_dim(w.size(), g.size(), "snip");
    ScoreVector s;
    s.criterion = "snip";
    s.values.resize(w.size());
    double normalizer = 0.0;
    for (std::size_t q = 0; q < w.size(); ++q) {
        s.values[q] = std::abs(w[q] * g[q]);
        normalizer += s.values[q];
    }
    if (normalizer == 0.0)
        throw DegenerateScores("snip normalizer is zero (dead initialization)");
    for (auto& v : s.values) v /= normalizer;
    return s;
}

ScoreVector score_grasp(GradientSource& source, std::span<const double> w0, double fd_epsilon) {
    if (fd_epsilon <= 0.0) throw InvalidArgument("grasp finite-difference epsilon must be > 0");
    check_same_dim(w0.size(), static_cast<std::size_t>(source.dim()), "grasp");

    const auto g0 = source.gradient_at(w0);
    check_finite(g0, "grasp gradient");
    double norm_sq = 0.0;
    for (double v : g0) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);

    ScoreVector s;
    s.criterion = "grasp";
    s.values.assign(w0.size(), 0.0);
    if (norm == 0.0) {
        // w = 0 gives zero raw scores; a genuinely dead gradient direction
        // with live weights is an error
        bool all_zero_w = true;
        for (double v : w0) all_zero_w &= (v == 0.0);
        if (all_zero_w) return s;
        throw ZeroGradient("grasp direction undefined: zero mean gradient");
    }

    std::vector<double> shifted(w0.begin(), w0.end());
    for (std::size_t q = 0; q < w0.size(); ++q)
        shifted[q] = w0[q] + fd_epsilon * g0[q] / norm;
    const auto g_plus = source.gradient_at(shifted);
    for (std::size_t q = 0; q < w0.size(); ++q)
        shifted[q] = w0[q] - fd_epsilon * g0[q] / norm;
    const auto g_minus = source.gradient_at(shifted);
    check_finite(g_plus, "grasp gradient");
    check_finite(g_minus, "grasp gradient");

    // (grad(w + eps v) - grad(w - eps v)) / (2 eps) approximates H v with
    // v = g0 / ||g0||; rescaling by ||g0|| recovers H g0
    for (std::size_t q = 0; q < w0.size(); ++q) {
        const double hg = (g_plus[q] - g_minus[q]) / (2.0 * fd_epsilon) * norm;
        s.values[q] = -w0[q] * hg;
    }
    check_finite(s.values, "grasp scores");
    return s;
}

ScoreVector score_fd(const FimDiagonal& fim) {
    ScoreVector s;
    s.criterion = "fd";
    s.values = fim.values;
    s.fim_batch_size = fim.batch_size;
    s.fim_batch_count = fim.batch_count;
    return s;
}

ScoreVector score_fp(std::span<const double> w, const FimDiagonal& fim) {
    check_same_dim(w.size(), fim.values.size(), "fp");
    ScoreVector s;
    s.criterion = "fp";
    s.values.resize(w.size());
    for (std::size_t q = 0; q < w.size(); ++q)
        s.values[q] = 0.5 * w[q] * w[q] * fim.values[q];
    s.fim_batch_size = fim.batch_size;
    s.fim_batch_count = fim.batch_count;
    return s;
}

ScoreVector score_fts(std::span<const double> w, const GradVector& g, const FimDiagonal& fim) {
    check_same_dim(w.size(), g.values.size(), "fts");
    check_same_dim(w.size(), fim.values.size(), "fts");
    ScoreVector s;
    s.criterion = "fts";
    s.values.resize(w.size());
    for (std::size_t q = 0; q < w.size(); ++q)
        s.values[q] = std::abs(w[q] * g.values[q] + 0.5 * w[q] * w[q] * fim.values[q]);
    s.fim_batch_size = fim.batch_size;
    s.fim_batch_count = fim.batch_count;
    return s;
}

ScoreVector score_fbss(std::span<const double> w, const GradVector& g, const FimDiagonal& fim,
                       double damping) {
    check_same_dim(w.size(), g.values.size(), "fbss");
    check_same_dim(w.size(), fim.values.size(), "fbss");
    if (damping < 0.0) throw InvalidArgument("fbss damping must be >= 0");
    ScoreVector s;
    s.criterion = "fbss";
    s.values.resize(w.size());
    for (std::size_t q = 0; q < w.size(); ++q) {
        const double f = fim.values[q] + damping;
        if (f == 0.0) throw SingularFisher("fbss: zero Fisher entry with zero damping");
        const double r = w[q] - g.values[q] / f;
        s.values[q] = 0.5 * (r * r) * f;
    }
    s.fim_batch_size = fim.batch_size;
    s.fim_batch_count = fim.batch_count;
    return s;
}

double taylor_delta_loss(std::span<const double> dw, std::span<const double> g,
                         std::span<const double> h_diag) {
    check_same_dim(dw.size(), g.size(), "taylor_delta_loss");
    check_same_dim(dw.size(), h_diag.size(), "taylor_delta_loss");
    double first = 0.0, second = 0.0;
    for (std::size_t q = 0; q < dw.size(); ++q) {
        first += dw[q] * g[q];
        second += dw[q] * dw[q] * h_diag[q];
    }
    return first + 0.5 * second;
}

const std::vector<std::string>& criterion_ids() {
    static const std::vector<std::string> ids = {"random", "magnitude", "gn",  "snip", "grasp",
                                                 "fd",     "fp",        "fts", "fbss"};
    return ids;
}

bool criterion_uses_fim(const std::string& id) {
    return id == "fd" || id == "fp" || id == "fts" || id == "fbss";
}

ScoreVector compute_scores(const std::string& criterion, Model& model, const Dataset& train,
                           const ScoreOptions& opts) {
    const auto w = model.values();
    ScoreVector s;
    if (criterion == "random") {
        s = score_random(model.param_count(), opts.seed);
    } else if (criterion == "magnitude") {
        s = score_magnitude(w);
    } else if (criterion == "gn") {
        s = score_gradient_norm(dataset_mean_gradient(model, train).values);
    } else if (criterion == "snip") {
        s = score_snip(w, dataset_mean_gradient(model, train).values);
    } else if (criterion == "grasp") {
        std::vector<double> w0(w.begin(), w.end());
        ModelDatasetGradient source(model, train);
        s = score_grasp(source, w0, opts.grasp_epsilon);
    } else if (criterion_uses_fim(criterion)) {
        const auto batch_size = std::min<std::int64_t>(opts.fim_batch_size, train.size());
        auto partition = partition_batches(train.size(), batch_size, opts.seed);
        auto [g, fim] = accumulate_fts_inputs(model, train, partition);
        if (criterion == "fd")
            s = score_fd(fim);
        else if (criterion == "fp")
            s = score_fp(w, fim);
        else if (criterion == "fts")
            s = score_fts(w, g, fim);
        else
            s = score_fbss(w, g, fim, opts.fbss_damping);
    } else {
        throw InvalidArgument("unknown criterion: " + criterion);
    }
    s.seed = opts.seed;
    return s;
}

}  // namespace fisherprune
