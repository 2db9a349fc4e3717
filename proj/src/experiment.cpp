#include "fisherprune/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fisherprune/errors.hpp"
#include "fisherprune/masking.hpp"
#include "fisherprune/oracle.hpp"
#include "fisherprune/rng.hpp"

namespace fisherprune {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v, int digits = 6) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sanitize(std::string s) {
    for (auto& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

std::string resolve_path(const std::string& path) {
    if (path.empty() || fs::exists(path)) return path;
    if (const char* root = std::getenv("FISHERPRUNE_DATA_ROOT"))
        if (fs::exists(fs::path(root) / path)) return (fs::path(root) / path).string();
    return path;
}

std::vector<std::string> resolve_paths(const std::vector<std::string>& paths) {
    std::vector<std::string> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(resolve_path(p));
    return out;
}

constexpr const char* kRawHeader =
    "config_hash,status,dataset,arch,preset,criterion,sparsity,seed,warmup_epochs,"
    "fim_batch_size,epochs,test_accuracy,best_val_epoch,best_val_accuracy,density,"
    "prunable_sparsity,min_layer_retention,collapsed,collapsed_layers";

std::string format_row(const ExperimentConfig& cfg, const RunResult& r) {
    std::ostringstream os;
    os << r.config_hash << ',' << sanitize(r.status) << ',' << cfg.data.name << ',' << cfg.arch
       << ',' << cfg.preset << ',' << r.point.criterion << ',' << fmt(r.point.sparsity) << ','
       << r.point.seed << ',' << r.point.warmup << ',' << r.point.fim_batch << ','
       << r.epochs_trained << ',' << fmt(r.test_accuracy) << ',' << r.best_val_epoch << ','
       << fmt(r.best_val_accuracy) << ',' << fmt(r.density, 9) << ','
       << fmt(r.prunable_sparsity, 9) << ',' << fmt(r.min_layer_retention, 9) << ','
       << (r.collapsed ? 1 : 0) << ',' << sanitize(r.collapsed_layers);
    return os.str();
}

struct ParsedRow {
    std::string hash, status, criterion;
    double sparsity = 0.0, test_accuracy = 0.0;
    std::int32_t warmup = 0;
    std::int64_t fim_batch = 0;
    std::uint64_t seed = 0;
};

// splits with trailing empty fields preserved
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

bool parse_row(const std::string& line, ParsedRow& row) {
    const auto fields = split_csv_line(line);
    if (fields.size() < 19) return false;
    if (fields[0] == "config_hash") return false;  // header
    try {
        row.hash = fields[0];
        row.status = fields[1];
        row.criterion = fields[5];
        row.sparsity = std::stod(fields[6]);
        row.seed = std::stoull(fields[7]);
        row.warmup = std::stoi(fields[8]);
        row.fim_batch = std::stoll(fields[9]);
        row.test_accuracy = fields[11] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                                : std::stod(fields[11]);
    } catch (const std::exception&) {
        return false;
    }
    return true;
}

void write_run_json(const ExperimentConfig& cfg, const RunResult& r, const std::string& dir,
                    const std::string& preprocessing) {
    nlohmann::ordered_json j;
    j["config_hash"] = r.config_hash;
    j["status"] = r.status;
    j["dataset"] = cfg.data.name;
    j["arch"] = cfg.arch;
    j["preset"] = cfg.preset;
    j["criterion"] = r.point.criterion;
    j["sparsity"] = r.point.sparsity;
    j["seed"] = r.point.seed;
    j["warmup_epochs"] = r.point.warmup;
    j["fim_batch_size"] = r.point.fim_batch;
    j["epochs_trained"] = r.epochs_trained;
    j["test_accuracy"] = r.test_accuracy;
    j["best_val_epoch"] = r.best_val_epoch;
    j["best_val_accuracy"] = r.best_val_accuracy;
    j["density"] = r.density;
    j["prunable_sparsity"] = r.prunable_sparsity;
    j["min_layer_retention"] = r.min_layer_retention;
    j["collapsed"] = r.collapsed;
    j["collapsed_layers"] = r.collapsed_layers;
    j["wall_seconds"] = r.wall_seconds;
    j["preprocessing"] = preprocessing;
    j["sgd"] = {{"epochs", cfg.sgd.epochs},
                {"lr", cfg.sgd.lr},
                {"momentum", cfg.sgd.momentum},
                {"weight_decay", cfg.sgd.weight_decay},
                {"lr_drops", cfg.sgd.lr_drops},
                {"drop_factor", cfg.sgd.drop_factor},
                {"batch_size", cfg.sgd.batch_size}};
    std::ofstream f(fs::path(dir) / (r.config_hash + ".json"));
    f << j.dump(2) << '\n';
}

void write_summary(const std::string& path, const std::vector<ParsedRow>& rows) {
    // group by (criterion, sparsity, warmup, fim batch); population std
    std::map<std::tuple<std::string, std::string, std::int32_t, std::int64_t>,
             std::vector<double>>
        groups;
    for (const auto& r : rows) {
        if (r.status != "ok") continue;
        groups[{r.criterion, fmt(r.sparsity), r.warmup, r.fim_batch}].push_back(r.test_accuracy);
    }
    std::ofstream f(path, std::ios::binary);
    f << "# accuracy aggregated over seeds; std is the population standard deviation\n";
    f << "criterion,sparsity,warmup_epochs,fim_batch_size,n_seeds,mean_accuracy,std_accuracy,"
         "formatted\n";
    for (const auto& [key, accs] : groups) {
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        var /= static_cast<double>(accs.size());
        const double sd = std::sqrt(var);
        char formatted[64];
        std::snprintf(formatted, sizeof formatted, "%.2f \xc2\xb1 %.2f", mean, sd);
        f << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
          << std::get<3>(key) << ',' << accs.size() << ',' << fmt(mean) << ',' << fmt(sd) << ','
          << formatted << '\n';
    }
}

ExperimentOutput run_grid(const ExperimentConfig& cfg, const std::vector<GridPoint>& grid) {
    const LoadedData data = resolve_datasets(cfg.data);
    for (auto b : cfg.fim_batch_sizes)
        if (b > data.train.size())
            throw InvalidArgument("fim batch size exceeds the training set size");

    fs::create_directories(cfg.out_dir);
    fs::create_directories(fs::path(cfg.out_dir) / "runs");
    const std::string raw_path = (fs::path(cfg.out_dir) / "results.csv").string();
    const std::string summary_path = (fs::path(cfg.out_dir) / "summary.csv").string();

    // rows already present are carried over byte-for-byte
    std::map<std::string, std::string> existing;
    if (fs::exists(raw_path)) {
        std::ifstream in(raw_path);
        std::string line;
        while (std::getline(in, line)) {
            ParsedRow row;
            if (parse_row(line, row)) existing[row.hash] = line;
        }
    }

    std::vector<std::string> lines(grid.size());
    std::vector<bool> fresh(grid.size(), false);
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::string hash = run_config_hash(cfg, grid[i]);
        auto it = existing.find(hash);
        if (it != existing.end())
            lines[i] = it->second;
        else
            todo.push_back(i);
    }

    const int jobs = std::max(1, cfg.jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t t = next.fetch_add(1);
            if (t >= todo.size()) break;
            const std::size_t i = todo[t];
            RunResult r = execute_run(cfg, data, grid[i]);
            lines[i] = format_row(cfg, r);
            fresh[i] = true;
            write_run_json(cfg, r, (fs::path(cfg.out_dir) / "runs").string(),
                           data.preprocessing);
        }
    };
    if (jobs == 1 || todo.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    {
        std::ofstream out(raw_path, std::ios::binary);
        out << kRawHeader << '\n';
        for (const auto& line : lines) out << line << '\n';
    }

    std::vector<ParsedRow> rows;
    for (const auto& line : lines) {
        ParsedRow row;
        if (parse_row(line, row)) rows.push_back(row);
    }
    write_summary(summary_path, rows);

    ExperimentOutput out;
    out.raw_csv = raw_path;
    out.summary_csv = summary_path;
    out.executed = todo.size();
    out.reused = grid.size() - todo.size();
    return out;
}

}  // namespace

LoadedData resolve_datasets(const DatasetSpec& spec) {
    LoadedData out;
    Dataset pool;
    if (spec.name == "blobs") {
        pool = synth_blobs(spec.blob_classes, spec.blob_dim, spec.blob_per_class, spec.blob_seed);
        out.test = synth_blobs(spec.blob_classes, spec.blob_dim,
                               std::max<std::int64_t>(spec.blob_per_class / 4, 2),
                               mix_seed(spec.blob_seed, 0x7e57));
        out.preprocessing = "synthetic gaussian blobs, unit variance";
    } else if (spec.name == "mnist") {
        pool = load_mnist_idx(resolve_path(spec.mnist_images), resolve_path(spec.mnist_labels));
        out.test = load_mnist_idx(resolve_path(spec.mnist_test_images),
                                  resolve_path(spec.mnist_test_labels));
        out.preprocessing = "pixels scaled by 1/255, no normalization, no augmentation";
    } else if (spec.name == "cifar10") {
        pool = load_cifar10_bin(resolve_paths(spec.cifar_bins));
        out.test = load_cifar10_bin(resolve_paths(spec.cifar_test_bins));
        out.preprocessing = "pixels scaled by 1/255, no normalization, no augmentation";
    } else {
        throw InvalidArgument("unknown dataset: " + spec.name);
    }
    if (spec.subset > 0 && spec.subset < pool.size())
        pool = stratified_subset(pool, spec.subset, spec.split_seed);
    auto [train, val] = stratified_split(pool, SplitSpec{spec.train_fraction, true,
                                                         spec.split_seed});
    out.train = std::move(train);
    out.val = std::move(val);
    return out;
}

std::vector<GridPoint> enumerate_grid(const ExperimentConfig& cfg) {
    std::vector<GridPoint> grid;
    std::size_t index = 0;
    for (const auto& criterion : cfg.criteria)
        for (double sparsity : cfg.sparsities)
            for (std::int32_t warmup : cfg.warmup_epochs)
                for (std::int64_t fim_batch : cfg.fim_batch_sizes)
                    for (std::uint64_t seed : cfg.seeds)
                        grid.push_back({index++, criterion, sparsity, warmup, fim_batch, seed});
    return grid;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string run_config_hash(const ExperimentConfig& cfg, const GridPoint& point) {
    std::ostringstream os;
    os << "dataset=" << cfg.data.name << ";subset=" << cfg.data.subset
       << ";blob=" << cfg.data.blob_classes << 'x' << cfg.data.blob_dim << 'x'
       << cfg.data.blob_per_class << '@' << cfg.data.blob_seed
       << ";frac=" << fmt(cfg.data.train_fraction) << ";split=" << cfg.data.split_seed
       << ";arch=" << cfg.arch << ";preset=" << cfg.preset << ";epochs=" << cfg.sgd.epochs
       << ";lr=" << fmt(cfg.sgd.lr) << ";mom=" << fmt(cfg.sgd.momentum)
       << ";wd=" << fmt(cfg.sgd.weight_decay, 8) << ";factor=" << fmt(cfg.sgd.drop_factor);
    os << ";drops=";
    for (auto d : cfg.sgd.lr_drops) os << d << '+';
    os << ";bs=" << cfg.sgd.batch_size << ";grasp_eps=" << fmt(cfg.grasp_epsilon, 8)
       << ";fbss_damping=" << fmt(cfg.fbss_damping, 12) << ";criterion=" << point.criterion
       << ";sparsity=" << fmt(point.sparsity) << ";warmup=" << point.warmup
       << ";fim_batch=" << point.fim_batch << ";seed=" << point.seed;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(os.str())));
    return buf;
}

RunResult execute_run(const ExperimentConfig& cfg, const LoadedData& data,
                      const GridPoint& point) {
    RunResult result;
    result.point = point;
    result.config_hash = run_config_hash(cfg, point);
    const auto start = std::chrono::steady_clock::now();
    try {
        Model model = build_model(cfg.arch, point.seed);
        SgdConfig sgd = cfg.sgd;
        sgd.seed = point.seed;
        ScoreOptions opts;
        opts.fim_batch_size = point.fim_batch;
        opts.seed = point.seed;
        opts.grasp_epsilon = cfg.grasp_epsilon;
        opts.fbss_damping = cfg.fbss_damping;

        PruneTrainResult run = warmup_then_prune(model, point.criterion, point.sparsity,
                                                 point.warmup, data.train, data.val, sgd, opts);

        result.test_accuracy = evaluate_accuracy(model, data.test);
        result.best_val_epoch = run.report.best_val_epoch;
        result.best_val_accuracy = run.report.best_val_accuracy;
        result.epochs_trained = run.report.epochs_trained;
        result.density = run.mask.density();
        std::int64_t d_prunable = 0, kept = 0;
        for (const auto& seg : model.segments()) {
            if (!seg.prunable) continue;
            d_prunable += seg.length;
            for (std::int64_t i = 0; i < seg.length; ++i)
                kept += run.mask.bits[static_cast<std::size_t>(seg.offset + i)];
        }
        result.prunable_sparsity =
            1.0 - static_cast<double>(kept) / static_cast<double>(d_prunable);
        result.min_layer_retention = run.collapse.min_layer_retention;
        result.collapsed = run.collapse.collapsed;
        std::string joined;
        for (const auto& name : run.collapse.collapsed_layers) {
            if (!joined.empty()) joined += ';';
            joined += name;
        }
        result.collapsed_layers = joined;
    } catch (const Error& e) {
        result.status = e.what();
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    return run_grid(cfg, enumerate_grid(cfg));
}

ExperimentOutput sweep_fim(const ExperimentConfig& cfg) {
    ExperimentConfig sweep = cfg;
    sweep.criteria.clear();
    for (const auto& id : cfg.criteria)
        if (criterion_uses_fim(id)) sweep.criteria.push_back(id);
    if (sweep.criteria.empty()) sweep.criteria = {"fd", "fp", "fts", "fbss"};
    sweep.sparsities = {cfg.sparsities.front()};
    sweep.warmup_epochs = {cfg.warmup_epochs.front()};

    ExperimentOutput out = run_grid(sweep, enumerate_grid(sweep));

    // accuracy matrix: criterion rows, batch-size columns, mean over seeds
    std::ifstream in(out.raw_csv);
    std::string line;
    std::map<std::pair<std::string, std::int64_t>, std::pair<double, int>> cells;
    while (std::getline(in, line)) {
        ParsedRow row;
        if (!parse_row(line, row) || row.status != "ok") continue;
        auto& cell = cells[{row.criterion, row.fim_batch}];
        cell.first += row.test_accuracy;
        cell.second += 1;
    }
    const std::string matrix_path =
        (fs::path(cfg.out_dir) / "fim_batch_matrix.csv").string();
    std::ofstream f(matrix_path, std::ios::binary);
    f << "criterion";
    for (auto b : sweep.fim_batch_sizes) f << ',' << b;
    f << '\n';
    for (const auto& id : sweep.criteria) {
        f << id;
        for (auto b : sweep.fim_batch_sizes) {
            auto it = cells.find({id, b});
            f << ',' << (it == cells.end() || it->second.second == 0
                             ? "nan"
                             : fmt(it->second.first / it->second.second));
        }
        f << '\n';
    }
    return out;
}

void export_scatter(const ExperimentConfig& cfg, const std::string& criterion, double sparsity,
                    std::uint64_t seed, std::int64_t max_rows, const std::string& out_path) {
    const LoadedData data = resolve_datasets(cfg.data);
    Model model = build_model(cfg.arch, seed);
    ScoreOptions opts;
    opts.fim_batch_size = std::min<std::int64_t>(cfg.fim_batch_sizes.front(),
                                                 data.train.size());
    opts.seed = seed;
    opts.grasp_epsilon = cfg.grasp_epsilon;
    opts.fbss_damping = cfg.fbss_damping;

    const ScoreVector scores = compute_scores(criterion, model, data.train, opts);
    const PruneMask mask = build_mask(scores, sparsity, model.segments());
    const ScoreVector magnitude = score_magnitude(model.values());
    const PruneMask mag_mask = build_mask(magnitude, sparsity, model.segments());

    // brute-force magnitude cutoff: k-th largest |w| among prunable params
    std::vector<double> prunable_abs;
    for (const auto& seg : model.segments())
        if (seg.prunable)
            for (std::int64_t i = 0; i < seg.length; ++i)
                prunable_abs.push_back(magnitude.values[static_cast<std::size_t>(seg.offset + i)]);
    std::sort(prunable_abs.begin(), prunable_abs.end(), std::greater<>());
    const auto k = static_cast<std::int64_t>(
        std::floor((1.0 - sparsity) * static_cast<double>(prunable_abs.size()) + 0.5));
    const double magnitude_cutoff =
        k >= 1 && k <= static_cast<std::int64_t>(prunable_abs.size())
            ? prunable_abs[static_cast<std::size_t>(k - 1)]
            : std::numeric_limits<double>::quiet_NaN();

    std::vector<std::int64_t> indices;
    for (const auto& seg : model.segments())
        if (seg.prunable)
            for (std::int64_t i = 0; i < seg.length; ++i) indices.push_back(seg.offset + i);
    if (max_rows > 0 && static_cast<std::int64_t>(indices.size()) > max_rows) {
        Rng rng(mix_seed(seed, 0x5ca7));
        rng.shuffle(indices);
        indices.resize(static_cast<std::size_t>(max_rows));
        std::sort(indices.begin(), indices.end());
    }

    std::map<std::int64_t, std::string> layer_by_offset;
    for (const auto& seg : model.segments()) layer_by_offset[seg.offset] = seg.layer_name;

    std::ofstream f(out_path, std::ios::binary);
    f << "# criterion=" << criterion << " sparsity=" << fmt(sparsity) << " seed=" << seed
      << " arch=" << cfg.arch << '\n';
    f << "# magnitude_cutoff=" << fmt(magnitude_cutoff, 12) << '\n';
    f << "param_index,layer,abs_weight,score,selected,magnitude_selected\n";
    for (auto q : indices) {
        const LayerSegment* seg = nullptr;
        for (const auto& s : model.segments())
            if (q >= s.offset && q < s.offset + s.length) seg = &s;
        f << q << ',' << (seg ? seg->layer_name : "?") << ','
          << fmt(magnitude.values[static_cast<std::size_t>(q)], 9) << ','
          << fmt(scores.values[static_cast<std::size_t>(q)], 9) << ','
          << int(mask.bits[static_cast<std::size_t>(q)]) << ','
          << int(mag_mask.bits[static_cast<std::size_t>(q)]) << '\n';
    }
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    for (const auto& tok : split_list(csv)) out.push_back(std::stod(tok));
    return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& csv) {
    std::vector<std::int64_t> out;
    for (const auto& tok : split_list(csv)) out.push_back(std::stoll(tok));
    return out;
}

std::vector<std::int32_t> parse_int32_list(const std::string& csv) {
    std::vector<std::int32_t> out;
    for (const auto& tok : split_list(csv)) out.push_back(std::stoi(tok));
    return out;
}

std::vector<std::uint64_t> parse_uint_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    for (const auto& tok : split_list(csv)) out.push_back(std::stoull(tok));
    return out;
}

}  // namespace fisherprune
