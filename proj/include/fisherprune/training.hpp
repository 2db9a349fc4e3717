#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fisherprune/criteria.hpp"
#include "fisherprune/data.hpp"
#include "fisherprune/masking.hpp"
#include "fisherprune/model.hpp"

namespace fisherprune {

struct SgdConfig {
    std::int32_t epochs = 20;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::vector<std::int32_t> lr_drops = {10, 15};
    double drop_factor = 0.1;
    std::int32_t batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

// Named presets: desk (20 epochs, drops 10/15), paper-resnet18 and paper-vgg19
// (160 epochs, drops 60/120).
SgdConfig lookup_preset(const std::string& name);
std::vector<std::string> preset_names();

// cfg.lr * drop_factor^(number of drops <= epoch)
double lr_at_epoch(const SgdConfig& cfg, std::int32_t epoch);

// one coupled-SGD update in place: v <- mu v + g + wd w; w <- w - lr v
void sgd_step(std::span<double> w, std::span<double> v, std::span<const double> g, double lr,
              double momentum, double weight_decay);

struct TrainReport {
    std::vector<double> train_loss;    // per epoch
    std::vector<double> val_accuracy;  // per epoch, percent
    std::int32_t best_val_epoch = -1;
    double best_val_accuracy = 0.0;
    double test_accuracy_at_best = std::numeric_limits<double>::quiet_NaN();
    bool collapsed_at_prune = false;
    std::int32_t epochs_trained = 0;
};

// SGD with momentum and coupled weight decay:
//   v <- mu v + g + wd w;  w <- w - lr v
// Masked coordinates (weight and velocity) are re-zeroed after every step.
// The best-validation snapshot (earliest epoch on ties) is restored into the
// model before returning.
TrainReport train(Model& model, const PruneMask* mask, const Dataset& train_set,
                  const Dataset& val_set, const SgdConfig& cfg);

// top-1 accuracy in percent; argmax ties resolve to the lowest class index
double evaluate_accuracy(const Model& model, const Dataset& ds, std::int32_t batch_size = 256);

struct PruneTrainResult {
    TrainReport report;
    PruneMask mask;
    CollapseReport collapse;
};

// Dense training for warmup_epochs, scoring at the warmed weights, masking,
// then masked training for the remaining budget. Total trained epochs always
// equal cfg.epochs. Best-validation selection covers the masked phase only,
// so the restored snapshot is a pruned model.
PruneTrainResult warmup_then_prune(Model& model, const std::string& criterion, double p,
                                   std::int32_t warmup_epochs, const Dataset& train_set,
                                   const Dataset& val_set, const SgdConfig& cfg,
                                   const ScoreOptions& score_opts);

}  // namespace fisherprune
