#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fisherprune/data.hpp"
#include "fisherprune/model.hpp"

namespace fisherprune {

// Loss as a function of the flat parameter vector. The finite-difference
// oracles below use forward evaluations only, so they stay independent of the
// reverse-mode path they are checking.
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::int64_t dim() const = 0;
    virtual double loss_at(std::span<const double> w) = 0;
};

// model loss on one fixed batch; restores the original parameters on
// destruction
class ModelBatchObjective : public Objective {
public:
    ModelBatchObjective(Model& model, Batch batch);
    ~ModelBatchObjective() override;
    std::int64_t dim() const override { return model_.param_count(); }
    double loss_at(std::span<const double> w) override;

private:
    Model& model_;
    Batch batch_;
    std::vector<double> saved_;
};

// central differences (L(w + eps e_q) - L(w - eps e_q)) / (2 eps)
std::vector<double> finite_diff_grad(Objective& obj, std::span<const double> w, double eps);

// same, restricted to the given coordinates
std::vector<double> finite_diff_grad_at(Objective& obj, std::span<const double> w, double eps,
                                        std::span<const std::int64_t> coords);

// second central differences (L+ - 2 L0 + L-) / eps^2
std::vector<double> finite_diff_hessian_diag(Objective& obj, std::span<const double> w,
                                             double eps);

// L(w with w_q := 0) - L(w)
double true_delta_loss_remove(Objective& obj, std::span<const double> w, std::int64_t q);

struct TaylorOrderResult {
    std::vector<double> errors;  // |true delta - diagonal quadratic model| per scale
    std::vector<double> ratios;  // errors[i] / errors[i+1]
};

// The model term uses a finite-difference gradient and Hessian diagonal at w
// (step h_eps), so the check never touches reverse mode.
TaylorOrderResult taylor_order_check(Objective& obj, std::span<const double> w,
                                     std::span<const double> dw,
                                     std::span<const double> scales, double h_eps);

// deterministic stratified probe coordinates: up to per_segment from each
// segment, evenly strided
std::vector<std::int64_t> stratified_probe_coords(const std::vector<LayerSegment>& segments,
                                                  std::int64_t per_segment);

// max over coords of |ad - fd| / (|fd| + 1e-12)
double max_relative_error(std::span<const double> ad, std::span<const double> fd,
                          std::span<const std::int64_t> coords);

// Spearman rank correlation (average ranks on ties)
double spearman_rank_correlation(std::span<const double> a, std::span<const double> b);

// analytic fixtures for the checks above

// L = 0.5 sum a_q w_q^2: the diagonal second-order model is exact
class QuadraticObjective : public Objective {
public:
    explicit QuadraticObjective(std::vector<double> a) : a_(std::move(a)) {}
    std::int64_t dim() const override { return static_cast<std::int64_t>(a_.size()); }
    double loss_at(std::span<const double> w) override {
        double l = 0.0;
        for (std::size_t q = 0; q < a_.size(); ++q) l += 0.5 * a_[q] * w[q] * w[q];
        return l;
    }

private:
    std::vector<double> a_;
};

// L = sum a_q exp(b_q w_q): smooth, non-quadratic, Hessian diagonal
// everywhere, so the model error is the third-order remainder
class SeparableExpObjective : public Objective {
public:
    SeparableExpObjective(std::vector<double> a, std::vector<double> b)
        : a_(std::move(a)), b_(std::move(b)) {}
    std::int64_t dim() const override { return static_cast<std::int64_t>(a_.size()); }
    double loss_at(std::span<const double> w) override {
        double l = 0.0;
        for (std::size_t q = 0; q < a_.size(); ++q) l += a_[q] * std::exp(b_[q] * w[q]);
        return l;
    }

private:
    std::vector<double> a_, b_;
};

}  // namespace fisherprune
