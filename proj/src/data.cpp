#include "fisherprune/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "fisherprune/errors.hpp"
#include "fisherprune/rng.hpp"

namespace fisherprune {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TruncatedFile("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    const auto n = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(n);
    if (n > 0) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (!f) throw TruncatedFile("short read: " + path);
    return bytes;
}

std::uint32_t be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

// FNV-1a over the raw bytes of one sample; gives split membership that is
// independent of input order
std::uint64_t content_hash(const Dataset& ds, std::int64_t idx) {
    const std::int64_t stride = ds.images.numel() / ds.size();
    const double* p = ds.images.data() + idx * stride;
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int64_t i = 0; i < stride; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &p[i], sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

std::vector<std::vector<std::int64_t>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(ds.class_count));
    for (std::int64_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    return by_class;
}

// class members in canonical (content-hash) order, then seeded shuffle
std::vector<std::int64_t> canonical_shuffled(const Dataset& ds,
                                             std::vector<std::int64_t> members,
                                             std::uint64_t seed, std::int32_t cls) {
    std::vector<std::pair<std::uint64_t, std::int64_t>> keyed;
    keyed.reserve(members.size());
    for (auto idx : members) keyed.emplace_back(content_hash(ds, idx), idx);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::int64_t> ordered;
    ordered.reserve(keyed.size());
    for (auto& [h, idx] : keyed) ordered.push_back(idx);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    // shuffle positions, not original indices, so the permutation acts on the
    // canonical order
    std::vector<std::int64_t> perm(ordered.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::int64_t> out(ordered.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        out[i] = ordered[static_cast<std::size_t>(perm[i])];
    return out;
}

}  // namespace

std::vector<std::int64_t> Dataset::class_counts() const {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(class_count), 0);
    for (auto y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img_bytes = read_file(images_path);
    const auto lbl_bytes = read_file(labels_path);
    if (img_bytes.size() < 16) throw TruncatedFile("IDX image header truncated");
    if (lbl_bytes.size() < 8) throw TruncatedFile("IDX label header truncated");
    if (be32(img_bytes.data()) != 2051) throw BadMagic("IDX image magic != 2051");
    if (be32(lbl_bytes.data()) != 2049) throw BadMagic("IDX label magic != 2049");

    const std::int64_t n_img = be32(img_bytes.data() + 4);
    const std::int64_t rows = be32(img_bytes.data() + 8);
    const std::int64_t cols = be32(img_bytes.data() + 12);
    const std::int64_t n_lbl = be32(lbl_bytes.data() + 4);
    if (n_img != n_lbl) throw CountMismatch("image count != label count");
    if (static_cast<std::int64_t>(img_bytes.size()) != 16 + n_img * rows * cols)
        throw TruncatedFile("IDX image payload does not match header");
    if (static_cast<std::int64_t>(lbl_bytes.size()) != 8 + n_lbl)
        throw TruncatedFile("IDX label payload does not match header");
    if (n_img < 1) throw TruncatedFile("empty IDX dataset");

    Dataset ds;
    ds.class_count = 10;
    ds.labels.resize(static_cast<std::size_t>(n_lbl));
    for (std::int64_t i = 0; i < n_lbl; ++i) {
        const unsigned char y = lbl_bytes[static_cast<std::size_t>(8 + i)];
        if (y >= 10) throw BadLabel("MNIST label out of range");
        ds.labels[static_cast<std::size_t>(i)] = y;
    }
    std::vector<double> pixels(static_cast<std::size_t>(n_img * rows * cols));
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = static_cast<double>(img_bytes[16 + i]) / 255.0;
    ds.images = Tensor({n_img, 1, rows, cols}, std::move(pixels));
    return ds;
}

Dataset load_cifar10_bin(const std::vector<std::string>& paths) {
    constexpr std::int64_t kRecord = 3073;
    constexpr std::int64_t kPixels = 3072;
    std::vector<double> pixels;
    std::vector<std::int32_t> labels;
    for (const auto& path : paths) {
        const auto bytes = read_file(path);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw TruncatedFile("CIFAR-10 file length not a multiple of 3073: " + path);
        const std::int64_t n = static_cast<std::int64_t>(bytes.size()) / kRecord;
        for (std::int64_t r = 0; r < n; ++r) {
            const unsigned char* rec = bytes.data() + r * kRecord;
            if (rec[0] >= 10) throw BadLabel("CIFAR-10 label out of range");
            labels.push_back(rec[0]);
            for (std::int64_t i = 0; i < kPixels; ++i)
                pixels.push_back(static_cast<double>(rec[1 + i]) / 255.0);
        }
    }
    if (labels.empty()) throw TruncatedFile("no CIFAR-10 records");
    Dataset ds;
    ds.class_count = 10;
    const std::int64_t n = static_cast<std::int64_t>(labels.size());
    ds.labels = std::move(labels);
    ds.images = Tensor({n, 3, 32, 32}, std::move(pixels));
    return ds;
}

Dataset synth_blobs(std::int32_t classes, std::int64_t dim, std::int64_t per_class,
                    std::uint64_t seed) {
    if (classes < 2) throw InvalidArgument("synth_blobs needs >= 2 classes");
    if (per_class < 1) throw InvalidArgument("synth_blobs needs per_class >= 1");
    if (dim < 1) throw InvalidArgument("synth_blobs needs dim >= 1");

    // fixed distinct means: class c offsets coordinate (c mod dim) by a
    // radius that grows with each wrap-around
    constexpr double kRadius = 6.0;
    std::vector<std::vector<double>> means(static_cast<std::size_t>(classes),
                                           std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    for (std::int32_t c = 0; c < classes; ++c)
        means[static_cast<std::size_t>(c)][static_cast<std::size_t>(c % dim)] =
            kRadius * (1.0 + static_cast<double>(c / dim));

    const std::int64_t n = static_cast<std::int64_t>(classes) * per_class;
    std::vector<double> data(static_cast<std::size_t>(n * dim));
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::int32_t>(i % classes);
        labels[static_cast<std::size_t>(i)] = c;
        for (std::int64_t j = 0; j < dim; ++j)
            data[static_cast<std::size_t>(i * dim + j)] =
                means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] + rng.normal();
    }
    Dataset ds;
    ds.class_count = classes;
    ds.labels = std::move(labels);
    ds.images = Tensor({n, dim, 1, 1}, std::move(data));
    return ds;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec) {
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
        throw InvalidArgument("train_fraction must be in (0,1)");
    const auto by_class = indices_by_class(ds);
    for (std::size_t c = 0; c < by_class.size(); ++c)
        if (by_class[c].size() < 2)
            throw ClassTooSmall("class " + std::to_string(c) + " has fewer than 2 samples");

    std::vector<std::int64_t> train_idx, val_idx;
    for (std::int32_t c = 0; c < ds.class_count; ++c) {
        auto ordered = canonical_shuffled(ds, by_class[static_cast<std::size_t>(c)], spec.seed, c);
        const auto n_train = static_cast<std::size_t>(
            std::floor(spec.train_fraction * static_cast<double>(ordered.size())));
        train_idx.insert(train_idx.end(), ordered.begin(),
                         ordered.begin() + static_cast<std::ptrdiff_t>(n_train));
        val_idx.insert(val_idx.end(), ordered.begin() + static_cast<std::ptrdiff_t>(n_train),
                       ordered.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {select_samples(ds, train_idx), select_samples(ds, val_idx)};
}

Dataset stratified_subset(const Dataset& ds, std::int64_t n, std::uint64_t seed) {
    if (n < 1 || n > ds.size()) throw InvalidArgument("subset size out of range");
    const auto by_class = indices_by_class(ds);
    const auto counts = ds.class_counts();

    // largest remainder apportionment
    std::vector<std::int64_t> take(static_cast<std::size_t>(ds.class_count), 0);
    std::vector<std::pair<double, std::int32_t>> remainders;
    std::int64_t assigned = 0;
    for (std::int32_t c = 0; c < ds.class_count; ++c) {
        const double exact = static_cast<double>(n) *
                             static_cast<double>(counts[static_cast<std::size_t>(c)]) /
                             static_cast<double>(ds.size());
        take[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(std::floor(exact));
        assigned += take[static_cast<std::size_t>(c)];
        remainders.emplace_back(-(exact - std::floor(exact)), c);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::int64_t i = 0; i < n - assigned; ++i)
        ++take[static_cast<std::size_t>(remainders[static_cast<std::size_t>(i)].second)];

    std::vector<std::int64_t> chosen;
    for (std::int32_t c = 0; c < ds.class_count; ++c) {
        auto ordered = canonical_shuffled(ds, by_class[static_cast<std::size_t>(c)], seed, c);
        const auto t = std::min<std::int64_t>(take[static_cast<std::size_t>(c)],
                                              static_cast<std::int64_t>(ordered.size()));
        chosen.insert(chosen.end(), ordered.begin(), ordered.begin() + t);
    }
    std::sort(chosen.begin(), chosen.end());
    return select_samples(ds, chosen);
}

Dataset select_samples(const Dataset& ds, std::span<const std::int64_t> indices) {
    const std::int64_t stride = ds.images.numel() / ds.size();
    std::vector<double> data(indices.size() * static_cast<std::size_t>(stride));
    std::vector<std::int32_t> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::memcpy(data.data() + i * static_cast<std::size_t>(stride),
                    ds.images.data() + indices[i] * stride,
                    static_cast<std::size_t>(stride) * sizeof(double));
        labels[i] = ds.labels[static_cast<std::size_t>(indices[i])];
    }
    auto shape = ds.images.shape();
    shape[0] = static_cast<std::int64_t>(indices.size());
    Dataset out;
    out.class_count = ds.class_count;
    out.labels = std::move(labels);
    out.images = Tensor(std::move(shape), std::move(data));
    return out;
}

Batch make_batch(const Dataset& ds, std::span<const std::int64_t> indices) {
    const std::int64_t stride = ds.images.numel() / ds.size();
    std::vector<double> data(indices.size() * static_cast<std::size_t>(stride));
    std::vector<std::int32_t> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::memcpy(data.data() + i * static_cast<std::size_t>(stride),
                    ds.images.data() + indices[i] * stride,
                    static_cast<std::size_t>(stride) * sizeof(double));
        labels[i] = ds.labels[static_cast<std::size_t>(indices[i])];
    }
    auto shape = ds.images.shape();
    shape[0] = static_cast<std::int64_t>(indices.size());
    return Batch{Tensor(std::move(shape), std::move(data)), std::move(labels)};
}

Batch full_batch(const Dataset& ds) {
    return Batch{ds.images, ds.labels};
}

}  // namespace fisherprune
