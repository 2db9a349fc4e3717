#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>

#include "fisherprune/rng.hpp"

namespace fixtures {

using fisherprune::Dataset;
using fisherprune::Rng;
using fisherprune::Tensor;
using fisherprune::mix_seed;

namespace {

struct Segment {
    double r0, c0, r1, c1;  // inner 20x20 box coordinates
};

// ten stroke glyphs, loosely seven-segment shaped so classes stay distinct
const std::vector<std::vector<Segment>>& glyphs() {
    static const std::vector<std::vector<Segment>> g = {
        {{2, 4, 2, 15}, {2, 15, 17, 15}, {17, 15, 17, 4}, {17, 4, 2, 4}},          // box
        {{2, 10, 17, 10}},                                                         // bar
        {{2, 4, 2, 15}, {2, 15, 17, 4}, {17, 4, 17, 15}},                          // z
        {{2, 4, 2, 15}, {9, 6, 9, 15}, {17, 4, 17, 15}},                           // triple
        {{2, 4, 9, 4}, {9, 4, 9, 15}, {2, 15, 17, 15}},                            // h-right
        {{2, 15, 2, 4}, {2, 4, 9, 4}, {9, 4, 9, 15}, {9, 15, 17, 15}, {17, 15, 17, 4}},  // s
        {{2, 10, 17, 4}, {17, 4, 17, 15}, {17, 15, 9, 15}, {9, 15, 9, 4}},         // hook
        {{2, 4, 2, 15}, {2, 15, 17, 6}},                                           // seven
        {{2, 4, 2, 15}, {2, 15, 17, 15}, {17, 15, 17, 4}, {17, 4, 2, 4}, {9, 4, 9, 15}},  // box-bar
        {{2, 4, 2, 11}, {2, 11, 9, 11}, {9, 11, 9, 4}, {9, 4, 2, 4}, {2, 15, 17, 15}},    // p
    };
    return g;
}

void stamp(std::vector<double>& img, std::int64_t side, double r, double c, double intensity) {
    const auto r0 = static_cast<std::int64_t>(std::floor(r - 2.0));
    const auto c0 = static_cast<std::int64_t>(std::floor(c - 2.0));
    for (std::int64_t rr = r0; rr <= r0 + 4; ++rr) {
        for (std::int64_t cc = c0; cc <= c0 + 4; ++cc) {
            if (rr < 3 || rr >= side - 3 || cc < 3 || cc >= side - 3) continue;  // keep border dark
            const double dr = static_cast<double>(rr) - r;
            const double dc = static_cast<double>(cc) - c;
            const double d2 = dr * dr + dc * dc;
            const double v = intensity * std::max(0.0, 1.0 - d2 / 4.0);
            auto& px = img[static_cast<std::size_t>(rr * side + cc)];
            px = std::max(px, v);
        }
    }
}

// byte-quantized pixels so the in-memory dataset and the IDX round-trip agree.
// Thick strokes and generous position jitter: classes stay legible while no
// single pixel is reliably informative, which the collapse study needs.
std::vector<unsigned char> render_mnist_bytes(std::int64_t count, std::uint64_t seed,
                                              std::vector<std::int32_t>& labels) {
    constexpr std::int64_t side = 28;
    std::vector<unsigned char> bytes(static_cast<std::size_t>(count * side * side));
    labels.resize(static_cast<std::size_t>(count));
    Rng rng(mix_seed(seed, 0x3a11));
    for (std::int64_t n = 0; n < count; ++n) {
        const auto cls = static_cast<std::int32_t>(n % 10);
        labels[static_cast<std::size_t>(n)] = cls;
        std::vector<double> img(side * side, 0.0);
        const double dr = std::floor(rng.uniform(-6.0, 7.0));
        const double dc = std::floor(rng.uniform(-6.0, 7.0));
        const double gain = rng.uniform(0.75, 1.0);
        for (const auto& seg : glyphs()[static_cast<std::size_t>(cls)]) {
            const double len = std::hypot(seg.r1 - seg.r0, seg.c1 - seg.c0);
            const auto steps = std::max<std::int64_t>(2, static_cast<std::int64_t>(len * 2.5));
            for (std::int64_t t = 0; t <= steps; ++t) {
                const double a = static_cast<double>(t) / static_cast<double>(steps);
                stamp(img, side, 4.0 + seg.r0 + a * (seg.r1 - seg.r0) + dr,
                      4.0 + seg.c0 + a * (seg.c1 - seg.c0) + dc, gain);
            }
        }
        for (std::int64_t i = 0; i < side * side; ++i) {
            double v = img[static_cast<std::size_t>(i)];
            if (v > 0.0) v += 0.04 * rng.normal();
            v = std::clamp(v, 0.0, 1.0);
            bytes[static_cast<std::size_t>(n * side * side + i)] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }
    }
    return bytes;
}

std::vector<unsigned char> render_cifar_bytes(std::int64_t count, std::uint64_t seed,
                                              std::vector<std::int32_t>& labels) {
    constexpr std::int64_t side = 32;
    constexpr std::int64_t plane = side * side;
    // contrast pulled toward mid-gray plus heavy pixel noise keeps the task
    // away from saturation for pruned models
    constexpr double kContrast = 0.5;
    constexpr double kNoise = 0.25;
    const double fg[2][3] = {{0.90, 0.20, 0.15}, {0.15, 0.85, 0.25}};
    const double bg[2][3] = {{0.10, 0.15, 0.60}, {0.55, 0.10, 0.50}};
    std::vector<unsigned char> bytes(static_cast<std::size_t>(count) * (1 + 3 * plane));
    labels.resize(static_cast<std::size_t>(count));
    Rng rng(mix_seed(seed, 0xc1fa));
    for (std::int64_t n = 0; n < count; ++n) {
        const auto cls = static_cast<std::int32_t>(n % 10);
        labels[static_cast<std::size_t>(n)] = cls;
        const int pattern = cls % 5;
        const int palette = cls / 5;
        const auto phase = static_cast<std::int64_t>(rng.below(8));
        const double cx = 15.5 + std::floor(rng.uniform(-3.0, 4.0));
        const double cy = 15.5 + std::floor(rng.uniform(-3.0, 4.0));
        const double gain = rng.uniform(0.8, 1.0);
        unsigned char* rec =
            bytes.data() + static_cast<std::size_t>(n) * (1 + 3 * plane);
        rec[0] = static_cast<unsigned char>(cls);
        for (std::int64_t r = 0; r < side; ++r) {
            for (std::int64_t c = 0; c < side; ++c) {
                bool on = false;
                switch (pattern) {
                    case 0: on = ((r + phase) / 4) % 2 == 0; break;
                    case 1: on = ((c + phase) / 4) % 2 == 0; break;
                    case 2: on = ((r + c + phase) / 4) % 2 == 0; break;
                    case 3: {
                        const double dr = static_cast<double>(r) - cy;
                        const double dc = static_cast<double>(c) - cx;
                        on = dr * dr + dc * dc <= 8.5 * 8.5;
                        break;
                    }
                    default:
                        on = (((r + phase) / 8) % 2) == (((c + phase) / 8) % 2);
                        break;
                }
                const double* base = on ? fg[palette] : bg[palette];
                for (int ch = 0; ch < 3; ++ch) {
                    double v = 0.35 + kContrast * (gain * base[ch] - 0.35) + kNoise * rng.normal();
                    v = std::clamp(v, 0.0, 1.0);
                    rec[1 + ch * plane + r * side + c] =
                        static_cast<unsigned char>(std::lround(v * 255.0));
                }
            }
        }
    }
    return bytes;
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

IdxPaths write_synth_mnist(const std::filesystem::path& dir, std::int64_t count,
                           std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::int32_t> labels;
    const auto pixels = render_mnist_bytes(count, seed, labels);

    IdxPaths paths;
    paths.images = (dir / ("synth-images-" + std::to_string(seed) + ".idx3-ubyte")).string();
    paths.labels = (dir / ("synth-labels-" + std::to_string(seed) + ".idx1-ubyte")).string();
    {
        std::ofstream f(paths.images, std::ios::binary);
        write_be32(f, 2051);
        write_be32(f, static_cast<std::uint32_t>(count));
        write_be32(f, 28);
        write_be32(f, 28);
        f.write(reinterpret_cast<const char*>(pixels.data()),
                static_cast<std::streamsize>(pixels.size()));
    }
    {
        std::ofstream f(paths.labels, std::ios::binary);
        write_be32(f, 2049);
        write_be32(f, static_cast<std::uint32_t>(count));
        for (auto y : labels) f.put(static_cast<char>(y));
    }
    return paths;
}

std::string write_synth_cifar(const std::filesystem::path& dir, std::int64_t count,
                              std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::int32_t> labels;
    const auto bytes = render_cifar_bytes(count, seed, labels);
    const std::string path = (dir / ("synth-cifar-" + std::to_string(seed) + ".bin")).string();
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    return f ? path : throw std::runtime_error("failed to write " + path);
}

Dataset synth_mnist_dataset(std::int64_t count, std::uint64_t seed) {
    std::vector<std::int32_t> labels;
    const auto bytes = render_mnist_bytes(count, seed, labels);
    std::vector<double> pixels(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        pixels[i] = static_cast<double>(bytes[i]) / 255.0;
    Dataset ds;
    ds.class_count = 10;
    ds.labels = std::move(labels);
    ds.images = Tensor({count, 1, 28, 28}, std::move(pixels));
    return ds;
}

Dataset synth_cifar_dataset(std::int64_t count, std::uint64_t seed) {
    std::vector<std::int32_t> labels;
    const auto bytes = render_cifar_bytes(count, seed, labels);
    constexpr std::int64_t plane = 32 * 32;
    std::vector<double> pixels(static_cast<std::size_t>(count * 3 * plane));
    for (std::int64_t n = 0; n < count; ++n) {
        const unsigned char* rec = bytes.data() + static_cast<std::size_t>(n) * (1 + 3 * plane);
        for (std::int64_t i = 0; i < 3 * plane; ++i)
            pixels[static_cast<std::size_t>(n * 3 * plane + i)] =
                static_cast<double>(rec[1 + i]) / 255.0;
    }
    Dataset ds;
    ds.class_count = 10;
    ds.labels = std::move(labels);
    ds.images = Tensor({count, 3, 32, 32}, std::move(pixels));
    return ds;
}

std::filesystem::path fresh_temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("fisherprune-test-" + tag + "-" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
