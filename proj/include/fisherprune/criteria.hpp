#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fisherprune/data.hpp"
#include "fisherprune/fim.hpp"
#include "fisherprune/model.hpp"

namespace fisherprune {

// Per-parameter importance scores, indexed like the flat parameter vector.
// Nonnegative for every criterion except raw grasp, whose sign matters for
// ranking (keep the largest raw values).
struct ScoreVector {
    std::vector<double> values;
    std::string criterion;
    std::uint64_t seed = 0;
    std::int64_t fim_batch_size = 0;
    std::int64_t fim_batch_count = 0;
    std::int64_t dim() const { return static_cast<std::int64_t>(values.size()); }
};

// full-dataset mean gradient as a function of the flat parameter vector;
// lets grasp run against analytic fixtures as well as live models
class GradientSource {
public:
    virtual ~GradientSource() = default;
    virtual std::int64_t dim() const = 0;
    virtual std::vector<double> gradient_at(std::span<const double> w) = 0;
};

// assigns candidate parameters into the model, restores the originals on
// destruction
class ModelDatasetGradient : public GradientSource {
public:
    ModelDatasetGradient(Model& model, const Dataset& ds);
    ~ModelDatasetGradient() override;
    std::int64_t dim() const override { return model_.param_count(); }
    std::vector<double> gradient_at(std::span<const double> w) override;

private:
    Model& model_;
    const Dataset& ds_;
    std::vector<double> saved_;
};

ScoreVector score_random(std::int64_t d, std::uint64_t seed);
ScoreVector score_magnitude(std::span<const double> w);
ScoreVector score_gradient_norm(std::span<const double> g);

// |w_q g_q| / sum_k |w_k g_k|; DegenerateScores when the normalizer is zero
ScoreVector score_snip(std::span<const double> w, std::span<const double> g);

// raw_q = -w_q (H grad)_q with the Hessian-gradient product taken by central
// finite differences of gradient_at along the normalized gradient direction
ScoreVector score_grasp(GradientSource& source, std::span<const double> w0, double fd_epsilon);

ScoreVector score_fd(const FimDiagonal& fim);
ScoreVector score_fp(std::span<const double> w, const FimDiagonal& fim);

// s_q = |w_q g_q + 0.5 w_q^2 F_qq|
ScoreVector score_fts(std::span<const double> w, const GradVector& g, const FimDiagonal& fim);

// s_q = ((F_qq + damping)/2) (w_q - g_q/(F_qq + damping))^2
ScoreVector score_fbss(std::span<const double> w, const GradVector& g, const FimDiagonal& fim,
                       double damping);

// diagonal quadratic model: sum_q dw_q g_q + 0.5 sum_q dw_q^2 h_q
double taylor_delta_loss(std::span<const double> dw, std::span<const double> g,
                         std::span<const double> h_diag);

struct ScoreOptions {
    std::int64_t fim_batch_size = 32;
    std::uint64_t seed = 0;
    double grasp_epsilon = 1e-3;
    double fbss_damping = 1e-8;
};

const std::vector<std::string>& criterion_ids();  // random..fbss in table order
bool criterion_uses_fim(const std::string& id);

// Dispatch by id: random | magnitude | gn | snip | grasp | fd | fp | fts | fbss.
// Gradients and Fisher estimates are taken at the model's current parameters.
ScoreVector compute_scores(const std::string& criterion, Model& model, const Dataset& train,
                           const ScoreOptions& opts);

}  // namespace fisherprune
