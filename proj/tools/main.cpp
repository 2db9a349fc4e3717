// Command-line front end: scoring, single prune-train runs, experiment grids,
// FIM batch-size sweeps, scatter exports, and the oracle verification table.

#include <cinttypes>
#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fisherprune/criteria.hpp"
#include "fisherprune/errors.hpp"
#include "fisherprune/experiment.hpp"
#include "fisherprune/masking.hpp"
#include "fisherprune/oracle.hpp"
#include "fisherprune/rng.hpp"
#include "fisherprune/training.hpp"

using namespace fisherprune;

namespace {

struct CliState {
    ExperimentConfig cfg;
    std::string criteria_csv = "fts";
    std::string sparsities_csv = "0.9";
    std::string seeds_csv = "0,1,2";
    std::string warmups_csv = "0";
    std::string fim_batches_csv = "32";
    std::string lr_drops_csv;
    std::string cifar_bins_csv, cifar_test_bins_csv;
};

void add_common_options(CLI::App* app, CliState& st) {
    app->set_config("--config", "", "flat key=value config file");
    app->add_option("--dataset", st.cfg.data.name, "blobs | mnist | cifar10");
    app->add_option("--mnist-images", st.cfg.data.mnist_images);
    app->add_option("--mnist-labels", st.cfg.data.mnist_labels);
    app->add_option("--mnist-test-images", st.cfg.data.mnist_test_images);
    app->add_option("--mnist-test-labels", st.cfg.data.mnist_test_labels);
    app->add_option("--cifar-bins", st.cifar_bins_csv, "comma-separated training .bin files");
    app->add_option("--cifar-test-bins", st.cifar_test_bins_csv);
    app->add_option("--subset", st.cfg.data.subset, "stratified subset size (0 = all)");
    app->add_option("--blob-classes", st.cfg.data.blob_classes);
    app->add_option("--blob-dim", st.cfg.data.blob_dim);
    app->add_option("--blob-per-class", st.cfg.data.blob_per_class);
    app->add_option("--blob-seed", st.cfg.data.blob_seed);
    app->add_option("--train-fraction", st.cfg.data.train_fraction);
    app->add_option("--split-seed", st.cfg.data.split_seed);
    app->add_option("--arch", st.cfg.arch, "registered architecture or mlp:<in>-<h>-<out>");
    app->add_option("--preset", st.cfg.preset, "desk | paper-resnet18 | paper-vgg19");
    app->add_option("--epochs", st.cfg.sgd.epochs);
    app->add_option("--lr", st.cfg.sgd.lr);
    app->add_option("--momentum", st.cfg.sgd.momentum);
    app->add_option("--weight-decay", st.cfg.sgd.weight_decay);
    app->add_option("--lr-drops", st.lr_drops_csv, "comma-separated drop epochs");
    app->add_option("--drop-factor", st.cfg.sgd.drop_factor);
    app->add_option("--batch-size", st.cfg.sgd.batch_size);
    app->add_option("--grasp-epsilon", st.cfg.grasp_epsilon);
    app->add_option("--fbss-damping", st.cfg.fbss_damping);
    app->add_option("--out-dir", st.cfg.out_dir);
    app->add_option("--jobs", st.cfg.jobs, "parallel grid workers");
}

// preset first, explicit flags override
void finalize_sgd(CLI::App* app, CliState& st) {
    SgdConfig base = lookup_preset(st.cfg.preset);
    base.seed = st.cfg.sgd.seed;
    if (!app->count("--epochs")) st.cfg.sgd.epochs = base.epochs;
    if (!app->count("--lr")) st.cfg.sgd.lr = base.lr;
    if (!app->count("--momentum")) st.cfg.sgd.momentum = base.momentum;
    if (!app->count("--weight-decay")) st.cfg.sgd.weight_decay = base.weight_decay;
    if (!app->count("--drop-factor")) st.cfg.sgd.drop_factor = base.drop_factor;
    if (!app->count("--batch-size")) st.cfg.sgd.batch_size = base.batch_size;
    if (app->count("--lr-drops"))
        st.cfg.sgd.lr_drops = parse_int32_list(st.lr_drops_csv);
    else
        st.cfg.sgd.lr_drops = base.lr_drops;
    if (app->count("--cifar-bins")) st.cfg.data.cifar_bins = split_list(st.cifar_bins_csv);
    if (app->count("--cifar-test-bins"))
        st.cfg.data.cifar_test_bins = split_list(st.cifar_test_bins_csv);
}

void finalize_lists(CliState& st) {
    st.cfg.criteria = split_list(st.criteria_csv);
    st.cfg.sparsities = parse_double_list(st.sparsities_csv);
    st.cfg.seeds = parse_uint_list(st.seeds_csv);
    st.cfg.warmup_epochs = parse_int32_list(st.warmups_csv);
    st.cfg.fim_batch_sizes = parse_int_list(st.fim_batches_csv);
}

int cmd_score(CliState& st, const std::string& criterion, std::uint64_t seed,
              std::int64_t fim_batch, const std::string& out_path) {
    LoadedData data = resolve_datasets(st.cfg.data);
    Model model = build_model(st.cfg.arch, seed);
    ScoreOptions opts;
    opts.fim_batch_size = std::min<std::int64_t>(fim_batch, data.train.size());
    opts.seed = seed;
    opts.grasp_epsilon = st.cfg.grasp_epsilon;
    opts.fbss_damping = st.cfg.fbss_damping;
    ScoreVector s = compute_scores(criterion, model, data.train, opts);

    double mn = s.values[0], mx = s.values[0], sum = 0.0;
    std::int64_t nonzero = 0;
    for (double v : s.values) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        sum += v;
        nonzero += (v != 0.0);
    }
    std::printf("criterion=%s d=%" PRId64 " min=%.6g max=%.6g mean=%.6g nonzero=%" PRId64 "\n",
                criterion.c_str(), s.dim(), mn, mx, sum / static_cast<double>(s.dim()), nonzero);
    for (const auto& seg : model.segments()) {
        if (!seg.prunable) continue;
        double layer_sum = 0.0;
        for (std::int64_t i = 0; i < seg.length; ++i)
            layer_sum += s.values[static_cast<std::size_t>(seg.offset + i)];
        std::printf("  %-8s len=%-8" PRId64 " mean=%.6g\n", seg.layer_name.c_str(), seg.length,
                    layer_sum / static_cast<double>(seg.length));
    }
    if (!out_path.empty()) {
        std::FILE* f = std::fopen(out_path.c_str(), "wb");
        if (!f) throw InvalidArgument("cannot write " + out_path);
        std::fprintf(f, "param_index,score\n");
        for (std::int64_t q = 0; q < s.dim(); ++q)
            std::fprintf(f, "%" PRId64 ",%.12g\n", q, s.values[static_cast<std::size_t>(q)]);
        std::fclose(f);
        std::printf("scores written to %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_prune_train(CliState& st, const std::string& criterion, double sparsity,
                    std::int32_t warmup, std::uint64_t seed, std::int64_t fim_batch) {
    LoadedData data = resolve_datasets(st.cfg.data);
    GridPoint point{0, criterion, sparsity, warmup, fim_batch, seed};
    RunResult r = execute_run(st.cfg, data, point);
    if (r.status != "ok") {
        std::printf("status: %s\n", r.status.c_str());
        return 1;
    }
    std::printf("criterion=%s sparsity=%.4f warmup=%d seed=%" PRIu64 "\n", criterion.c_str(),
                sparsity, warmup, seed);
    std::printf("density=%.6f prunable_sparsity=%.6f min_layer_retention=%.6f collapsed=%s%s%s\n",
                r.density, r.prunable_sparsity, r.min_layer_retention,
                r.collapsed ? "yes" : "no", r.collapsed ? " layers=" : "",
                r.collapsed_layers.c_str());
    std::printf("best_val_epoch=%d best_val_accuracy=%.4f test_accuracy=%.4f (%.1fs)\n",
                r.best_val_epoch, r.best_val_accuracy, r.test_accuracy, r.wall_seconds);
    return 0;
}

struct CheckTable {
    bool all_passed = true;
    void row(const std::string& name, bool pass, const std::string& detail) {
        std::printf("%-44s %s  %s\n", name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
        all_passed &= pass;
    }
    void info(const std::string& name, const std::string& detail) {
        std::printf("%-44s INFO  %s\n", name.c_str(), detail.c_str());
    }
};

Batch synthetic_batch(const Model& model, std::int64_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int64_t> shape = {n};
    for (auto d : model.spec().input_shape) shape.push_back(d);
    if (shape.size() == 2) shape = {n, 1, 1, shape[1]};
    Tensor images = Tensor::zeros(shape);
    for (auto& v : images.values()) v = rng.uniform01();
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    for (auto& y : labels)
        y = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(model.class_count())));
    return Batch{std::move(images), std::move(labels)};
}

int cmd_verify() {
    CheckTable table;

    for (const auto& arch : registered_architectures()) {
        Model model = build_model(arch, 0);
        Batch batch = synthetic_batch(model, 8, 0);
        ForwardResult fr = model.forward_loss(batch);
        const auto ad = backward(fr);
        const auto coords = stratified_probe_coords(model.segments(), 64);
        // deep fixtures sit near relu/maxpool kinks, the shallow mlp near the
        // round-off floor; step sizes chosen accordingly
        const double eps = arch == "mlp-small" ? 3e-5 : 3e-6;
        ModelBatchObjective obj(model, batch);
        const auto fd = finite_diff_grad_at(obj, model.values(), eps, coords);
        const double worst = max_relative_error(ad, fd, coords);
        char detail[96];
        std::snprintf(detail, sizeof detail, "max rel err %.3g over %zu probes (eps %.0e)",
                      worst, coords.size(), eps);
        table.row("gradient check: " + arch, worst < 1e-6, detail);
    }

    {
        Rng rng(0);
        std::vector<double> a(6), w(6), dw(6);
        for (auto& x : a) x = rng.uniform(0.5, 2.0);
        for (auto& x : w) x = rng.uniform(-1.0, 1.0);
        for (auto& x : dw) x = rng.uniform(-1.0, 1.0);
        QuadraticObjective obj(a);
        auto r = taylor_order_check(obj, w, dw, std::vector<double>{1e-1, 1e-2}, 1e-2);
        const double worst = std::max(r.errors[0], r.errors[1]);
        char detail[64];
        std::snprintf(detail, sizeof detail, "max model error %.3g", worst);
        table.row("taylor model exact on diagonal quadratic", worst < 1e-9, detail);
    }

    {
        Rng rng(1);
        std::vector<double> a(6), b(6), w(6), dw(6);
        for (auto& x : a) x = rng.uniform(0.5, 1.5);
        for (auto& x : b) x = rng.uniform(0.8, 1.4);
        for (auto& x : w) x = rng.uniform(-0.5, 0.5);
        for (auto& x : dw) x = rng.uniform(0.4, 1.0);
        SeparableExpObjective obj(a, b);
        auto r = taylor_order_check(obj, w, dw, std::vector<double>{1e-2, 5e-3, 2.5e-3}, 1e-3);
        const bool ok = r.ratios[0] > 6.0 && r.ratios[0] < 10.0 && r.ratios[1] > 6.0 &&
                        r.ratios[1] < 10.0;
        char detail[64];
        std::snprintf(detail, sizeof detail, "ratios %.2f, %.2f (third order ~ 8)", r.ratios[0],
                      r.ratios[1]);
        table.row("taylor remainder order on smooth fixture", ok, detail);
    }

    {
        Rng rng(2);
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            std::vector<double> w(32), g(32);
            for (auto& x : w) x = rng.normal();
            for (auto& x : g) x = rng.normal();
            ScoreVector snip = score_snip(w, g);
            for (std::size_t q = 1; q < 32; ++q) {
                const double a = std::abs(w[q - 1] * g[q - 1]);
                const double b = std::abs(w[q] * g[q]);
                const bool order_unnorm = a > b;
                const bool order_snip = snip.values[q - 1] > snip.values[q];
                if (a != b && order_unnorm != order_snip) ok = false;
            }
        }
        table.row("snip normalization preserves the ranking", ok, "200 randomized trials");
    }

    {
        Rng rng(3);
        bool ok = true;
        for (int trial = 0; trial < 100 && ok; ++trial) {
            std::vector<double> v(64);
            for (auto& x : v) x = rng.uniform01();
            ScoreVector s;
            s.values = v;
            std::vector<LayerSegment> segs = {{"w", 0, 64, SegmentKind::weight, true}};
            for (double p : {0.0, 0.5, 0.9}) {
                PruneMask m = build_mask(s, p, segs);
                const auto expected =
                    static_cast<std::int64_t>(std::floor((1.0 - p) * 64.0 + 0.5));
                if (m.retained_count() != expected) ok = false;
            }
        }
        table.row("mask retention counts are exact", ok, "100 randomized trials");
    }

    {
        Model model = build_model("mlp:24-16-6", 0);
        Dataset ds = synth_blobs(6, 24, 20, 0);
        Batch batch = full_batch(ds);
        ScoreOptions opts;
        opts.fim_batch_size = 8;
        ScoreVector fts = compute_scores("fts", model, ds, opts);
        std::vector<double> truth(static_cast<std::size_t>(model.param_count()));
        ModelBatchObjective obj(model, batch);
        std::vector<double> w(model.values().begin(), model.values().end());
        for (std::int64_t q = 0; q < model.param_count(); ++q)
            truth[static_cast<std::size_t>(q)] = std::abs(true_delta_loss_remove(obj, w, q));
        const double rho = spearman_rank_correlation(fts.values, truth);
        char detail[96];
        std::snprintf(detail, sizeof detail,
                      "spearman(|true dL|, fts) = %.4f over %" PRId64 " removals (diagnostic)",
                      rho, model.param_count());
        table.info("removal oracle agreement", detail);
    }

    std::printf("%s\n", table.all_passed ? "verification passed" : "verification FAILED");
    return table.all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-shot pruning at initialization with Fisher-based sensitivity scores"};
    app.require_subcommand(1);

    CliState st;

    auto* score = app.add_subcommand("score", "compute a score vector and print statistics");
    std::string score_criterion = "fts", score_out;
    std::uint64_t score_seed = 0;
    std::int64_t score_fim_batch = 32;
    add_common_options(score, st);
    score->add_option("--criterion", score_criterion);
    score->add_option("--seed", score_seed);
    score->add_option("--fim-batch-size", score_fim_batch);
    score->add_option("--out", score_out, "write the full score vector as CSV");

    auto* pt = app.add_subcommand("prune-train", "one prune-and-train run");
    std::string pt_criterion = "fts";
    double pt_sparsity = 0.9;
    std::int32_t pt_warmup = 0;
    std::uint64_t pt_seed = 0;
    std::int64_t pt_fim_batch = 32;
    add_common_options(pt, st);
    pt->add_option("--criterion", pt_criterion);
    pt->add_option("--sparsity", pt_sparsity);
    pt->add_option("--warmup", pt_warmup);
    pt->add_option("--seed", pt_seed);
    pt->add_option("--fim-batch-size", pt_fim_batch);

    auto* exp = app.add_subcommand("experiment", "run a criteria x sparsity x seed grid");
    add_common_options(exp, st);
    exp->add_option("--criteria", st.criteria_csv, "comma-separated criterion ids");
    exp->add_option("--sparsities", st.sparsities_csv);
    exp->add_option("--seeds", st.seeds_csv);
    exp->add_option("--warmup-epochs", st.warmups_csv);
    exp->add_option("--fim-batch-sizes", st.fim_batches_csv);

    auto* sweep = app.add_subcommand("sweep-fim", "fisher criteria x fim batch sizes");
    add_common_options(sweep, st);
    sweep->add_option("--criteria", st.criteria_csv);
    sweep->add_option("--sparsities", st.sparsities_csv);
    sweep->add_option("--seeds", st.seeds_csv);
    sweep->add_option("--warmup-epochs", st.warmups_csv);
    sweep->add_option("--fim-batch-sizes", st.fim_batches_csv);

    auto* scatter = app.add_subcommand("export-scatter", "per-parameter |w| vs score CSV");
    std::string sc_criterion = "fts", sc_out = "scatter.csv";
    double sc_sparsity = 0.99;
    std::uint64_t sc_seed = 0;
    std::int64_t sc_rows = 20000;
    add_common_options(scatter, st);
    scatter->add_option("--criterion", sc_criterion);
    scatter->add_option("--sparsity", sc_sparsity);
    scatter->add_option("--seed", sc_seed);
    scatter->add_option("--max-rows", sc_rows);
    scatter->add_option("--out", sc_out);

    auto* verify = app.add_subcommand("verify", "run the oracle checks and print a table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (score->parsed()) {
            finalize_sgd(score, st);
            return cmd_score(st, score_criterion, score_seed, score_fim_batch, score_out);
        }
        if (pt->parsed()) {
            finalize_sgd(pt, st);
            return cmd_prune_train(st, pt_criterion, pt_sparsity, pt_warmup, pt_seed,
                                   pt_fim_batch);
        }
        if (exp->parsed()) {
            finalize_sgd(exp, st);
            finalize_lists(st);
            ExperimentOutput out = run_experiment(st.cfg);
            std::printf("executed %zu runs, reused %zu\nraw: %s\nsummary: %s\n", out.executed,
                        out.reused, out.raw_csv.c_str(), out.summary_csv.c_str());
            return 0;
        }
        if (sweep->parsed()) {
            finalize_sgd(sweep, st);
            finalize_lists(st);
            ExperimentOutput out = sweep_fim(st.cfg);
            std::printf("executed %zu runs, reused %zu\nraw: %s\nmatrix: %s\n", out.executed,
                        out.reused, out.raw_csv.c_str(),
                        (std::filesystem::path(st.cfg.out_dir) / "fim_batch_matrix.csv")
                            .string()
                            .c_str());
            return 0;
        }
        if (scatter->parsed()) {
            finalize_sgd(scatter, st);
            export_scatter(st.cfg, sc_criterion, sc_sparsity, sc_seed, sc_rows, sc_out);
            std::printf("scatter written to %s\n", sc_out.c_str());
            return 0;
        }
        if (verify->parsed()) return cmd_verify();
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
