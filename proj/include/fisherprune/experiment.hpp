#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fisherprune/criteria.hpp"
#include "fisherprune/data.hpp"
#include "fisherprune/training.hpp"

namespace fisherprune {

struct DatasetSpec {
    std::string name = "blobs";  // blobs | mnist | cifar10
    std::string mnist_images, mnist_labels;
    std::string mnist_test_images, mnist_test_labels;
    std::vector<std::string> cifar_bins, cifar_test_bins;
    std::int64_t subset = 0;  // 0 = all
    std::int32_t blob_classes = 10;
    std::int64_t blob_dim = 16;
    std::int64_t blob_per_class = 200;
    std::uint64_t blob_seed = 0;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
    DatasetSpec data;
    std::string arch = "mlp-small";
    std::vector<std::string> criteria = {"fts"};
    std::vector<double> sparsities = {0.9};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::vector<std::int32_t> warmup_epochs = {0};
    std::vector<std::int64_t> fim_batch_sizes = {32};
    std::string preset = "desk";
    SgdConfig sgd = lookup_preset("desk");
    double grasp_epsilon = 1e-3;
    double fbss_damping = 1e-8;
    std::string out_dir = "runs";
    int jobs = 1;
};

struct LoadedData {
    Dataset train, val, test;
    std::string preprocessing;
};

// Resolves the dataset spec into train/val/test. Relative paths fall back to
// $FISHERPRUNE_DATA_ROOT. The subset is drawn before the stratified split;
// blobs synthesize their own held-out test draw.
LoadedData resolve_datasets(const DatasetSpec& spec);

struct GridPoint {
    std::size_t index = 0;
    std::string criterion;
    double sparsity = 0.0;
    std::int32_t warmup = 0;
    std::int64_t fim_batch = 0;
    std::uint64_t seed = 0;
};

// criterion x sparsity x warmup x fim batch x seed, in config order
std::vector<GridPoint> enumerate_grid(const ExperimentConfig& cfg);

struct RunResult {
    GridPoint point;
    std::string status = "ok";
    double test_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::int32_t best_val_epoch = -1;
    double best_val_accuracy = std::numeric_limits<double>::quiet_NaN();
    double density = std::numeric_limits<double>::quiet_NaN();
    double prunable_sparsity = std::numeric_limits<double>::quiet_NaN();
    double min_layer_retention = std::numeric_limits<double>::quiet_NaN();
    bool collapsed = false;
    std::string collapsed_layers;  // ';' joined
    std::int32_t epochs_trained = 0;
    double wall_seconds = 0.0;  // JSON mirror only, never in the CSV
    std::string config_hash;
};

std::uint64_t fnv1a64(std::string_view s);
std::string run_config_hash(const ExperimentConfig& cfg, const GridPoint& point);

// One isolated run: fresh model for (arch, seed), warmup/prune/train, test
// evaluation. Failures are captured in result.status; the harness continues.
RunResult execute_run(const ExperimentConfig& cfg, const LoadedData& data,
                      const GridPoint& point);

struct ExperimentOutput {
    std::string raw_csv;
    std::string summary_csv;
    std::size_t executed = 0;
    std::size_t reused = 0;
};

// Raw CSV row per grid point (rows with a matching config hash in an existing
// results file are carried over verbatim), summary CSV with mean +/- population
// std over seeds, and a JSON mirror per executed run.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

// Fisher criteria x fim batch sizes x seeds at the first configured sparsity;
// also writes an accuracy matrix CSV (criterion rows, batch-size columns).
ExperimentOutput sweep_fim(const ExperimentConfig& cfg);

// Per-parameter scatter rows: |w|, score, selected flag, magnitude-selected
// flag, with brute-force cutoffs in the header. Seeded subsample of at most
// max_rows parameters.
void export_scatter(const ExperimentConfig& cfg, const std::string& criterion, double sparsity,
                    std::uint64_t seed, std::int64_t max_rows, const std::string& out_path);

// parsing helpers shared with the CLI
std::vector<std::string> split_list(const std::string& csv);
std::vector<double> parse_double_list(const std::string& csv);
std::vector<std::int64_t> parse_int_list(const std::string& csv);
std::vector<std::int32_t> parse_int32_list(const std::string& csv);
std::vector<std::uint64_t> parse_uint_list(const std::string& csv);

}  // namespace fisherprune
