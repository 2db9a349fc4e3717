#include "fisherprune/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fisherprune/errors.hpp"
#include "fisherprune/rng.hpp"

namespace fisherprune {

void SgdConfig::validate() const {
    if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
    if (lr <= 0.0) throw InvalidArgument("lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw InvalidArgument("momentum must be in [0,1)");
    if (weight_decay < 0.0) throw InvalidArgument("weight_decay must be >= 0");
    if (drop_factor <= 0.0 || drop_factor > 1.0)
        throw InvalidArgument("drop_factor must be in (0,1]");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    for (std::size_t i = 0; i < lr_drops.size(); ++i) {
        if (lr_drops[i] >= epochs) throw InvalidArgument("lr drop epoch beyond budget");
        if (i > 0 && lr_drops[i] <= lr_drops[i - 1])
            throw InvalidArgument("lr drops must be strictly increasing");
    }
}

SgdConfig lookup_preset(const std::string& name) {
    SgdConfig cfg;
    if (name == "desk") {
        cfg.epochs = 20;
        cfg.lr = 0.01;
        cfg.momentum = 0.9;
        cfg.weight_decay = 1e-4;
        cfg.lr_drops = {10, 15};
        cfg.drop_factor = 0.2;
        cfg.batch_size = 32;
        return cfg;
    }
    if (name == "paper-resnet18") {
        cfg.epochs = 160;
        cfg.lr = 0.01;
        cfg.momentum = 0.9;
        cfg.weight_decay = 5e-4;
        cfg.lr_drops = {60, 120};
        cfg.drop_factor = 0.2;
        cfg.batch_size = 128;
        return cfg;
    }
    if (name == "paper-vgg19") {
        cfg.epochs = 160;
        cfg.lr = 0.1;
        cfg.momentum = 0.9;
        cfg.weight_decay = 1e-4;
        cfg.lr_drops = {60, 120};
        cfg.drop_factor = 0.1;
        cfg.batch_size = 128;
        return cfg;
    }
    throw InvalidArgument("unknown preset: " + name);
}

std::vector<std::string> preset_names() { return {"desk", "paper-resnet18", "paper-vgg19"}; }

double lr_at_epoch(const SgdConfig& cfg, std::int32_t epoch) {
    std::int32_t drops = 0;
    for (auto d : cfg.lr_drops)
        if (d <= epoch) ++drops;
    return cfg.lr * std::pow(cfg.drop_factor, drops);
}

void sgd_step(std::span<double> w, std::span<double> v, std::span<const double> g, double lr,
              double momentum, double weight_decay) {
    for (std::size_t q = 0; q < w.size(); ++q) {
        v[q] = momentum * v[q] + g[q] + weight_decay * w[q];
        w[q] -= lr * v[q];
    }
}

namespace {

class Trainer {
public:
    Trainer(Model& model, const SgdConfig& cfg)
        : model_(model), cfg_(cfg),
          velocity_(static_cast<std::size_t>(model.param_count()), 0.0) {}

    void zero_masked_velocity(const PruneMask& mask) {
        for (std::size_t q = 0; q < velocity_.size(); ++q)
            if (!mask.bits[q]) velocity_[q] = 0.0;
    }

    void reset_velocity() { std::fill(velocity_.begin(), velocity_.end(), 0.0); }

    // one pass over train_set at the given global epoch index; returns the
    // sample-weighted mean batch loss
    double run_epoch(std::int32_t epoch, const Dataset& train_set, const PruneMask* mask) {
        if (mask && mask->dim() != model_.param_count())
            throw LengthMismatch("mask length does not match model");
        const double lr = lr_at_epoch(cfg_, epoch);
        const auto n = train_set.size();
        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(cfg_.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        auto w = model_.values();
        double loss_sum = 0.0;
        for (std::int64_t start = 0; start < n; start += cfg_.batch_size) {
            const std::int64_t stop = std::min<std::int64_t>(n, start + cfg_.batch_size);
            Batch batch = make_batch(
                train_set, std::span<const std::int64_t>(order.data() + start,
                                                         static_cast<std::size_t>(stop - start)));
            ForwardResult fr = model_.forward_loss(batch);
            loss_sum += fr.loss * static_cast<double>(stop - start);
            const auto g = backward(fr);
            sgd_step(w, velocity_, g, lr, cfg_.momentum, cfg_.weight_decay);
            if (mask) {
                for (std::size_t q = 0; q < velocity_.size(); ++q) {
                    if (!mask->bits[q]) {
                        w[q] = 0.0;
                        velocity_[q] = 0.0;
                    }
                }
            }
        }
        return loss_sum / static_cast<double>(n);
    }

private:
    Model& model_;
    const SgdConfig& cfg_;
    std::vector<double> velocity_;
};

struct BestTracker {
    double best_acc = -1.0;
    std::int32_t best_epoch = -1;
    std::vector<double> snapshot;

    void offer(std::int32_t epoch, double acc, std::span<const double> w) {
        if (acc > best_acc) {
            best_acc = acc;
            best_epoch = epoch;
            snapshot.assign(w.begin(), w.end());
        }
    }
};

}  // namespace

double evaluate_accuracy(const Model& model, const Dataset& ds, std::int32_t batch_size) {
    if (ds.size() == 0) throw InvalidArgument("cannot evaluate on an empty dataset");
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < ds.size(); start += batch_size) {
        const std::int64_t stop = std::min<std::int64_t>(ds.size(), start + batch_size);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        Batch batch = make_batch(ds, idx);
        const Tensor logits = model.logits(batch);
        const std::int64_t C = logits.dim(1);
        for (std::int64_t b = 0; b < logits.dim(0); ++b) {
            const double* row = logits.data() + b * C;
            std::int64_t arg = 0;
            for (std::int64_t c = 1; c < C; ++c)
                if (row[c] > row[arg]) arg = c;
            if (arg == batch.labels[static_cast<std::size_t>(b)]) ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(ds.size());
}

TrainReport train(Model& model, const PruneMask* mask, const Dataset& train_set,
                  const Dataset& val_set, const SgdConfig& cfg) {
    cfg.validate();
    TrainReport report;
    Trainer trainer(model, cfg);
    if (mask) {
        apply_mask(model, *mask);
        trainer.zero_masked_velocity(*mask);
    }
    BestTracker best;
    for (std::int32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        report.train_loss.push_back(trainer.run_epoch(epoch, train_set, mask));
        const double acc = evaluate_accuracy(model, val_set);
        report.val_accuracy.push_back(acc);
        best.offer(epoch, acc, model.values());
        ++report.epochs_trained;
    }
    if (best.best_epoch >= 0) {
        model.assign_values(best.snapshot);
        report.best_val_epoch = best.best_epoch;
        report.best_val_accuracy = best.best_acc;
    }
    return report;
}

PruneTrainResult warmup_then_prune(Model& model, const std::string& criterion, double p,
                                   std::int32_t warmup_epochs, const Dataset& train_set,
                                   const Dataset& val_set, const SgdConfig& cfg,
                                   const ScoreOptions& score_opts) {
    cfg.validate();
    if (warmup_epochs < 0) throw InvalidArgument("warmup_epochs must be >= 0");
    if (warmup_epochs > cfg.epochs)
        throw InvalidArgument("warmup_epochs exceeds the epoch budget");

    PruneTrainResult result;
    TrainReport& report = result.report;
    Trainer trainer(model, cfg);

    for (std::int32_t epoch = 0; epoch < warmup_epochs; ++epoch) {
        report.train_loss.push_back(trainer.run_epoch(epoch, train_set, nullptr));
        report.val_accuracy.push_back(evaluate_accuracy(model, val_set));
        ++report.epochs_trained;
    }

    // score at the warmed weights (w0 exactly when warmup_epochs == 0)
    const ScoreVector scores = compute_scores(criterion, model, train_set, score_opts);
    result.mask = build_mask(scores, p, model.segments());
    result.collapse = detect_layer_collapse(result.mask, model.segments());
    report.collapsed_at_prune = result.collapse.collapsed;
    apply_mask(model, result.mask);
    // the pruned model starts from a fresh optimizer state
    trainer.reset_velocity();

    BestTracker best;
    for (std::int32_t epoch = warmup_epochs; epoch < cfg.epochs; ++epoch) {
        report.train_loss.push_back(trainer.run_epoch(epoch, train_set, &result.mask));
        const double acc = evaluate_accuracy(model, val_set);
        report.val_accuracy.push_back(acc);
        best.offer(epoch, acc, model.values());
        ++report.epochs_trained;
    }
    if (best.best_epoch >= 0) {
        model.assign_values(best.snapshot);
        report.best_val_epoch = best.best_epoch;
        report.best_val_accuracy = best.best_acc;
    }
    return result;
}

}  // namespace fisherprune
