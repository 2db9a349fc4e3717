#include <cmath>

#include "doctest.h"
#include "fisherprune/data.hpp"
#include "fisherprune/errors.hpp"
#include "fisherprune/model.hpp"
#include "fisherprune/rng.hpp"

using namespace fisherprune;

namespace {

std::int64_t mlp_param_count(std::int64_t in, const std::vector<std::int64_t>& hidden,
                             std::int64_t out) {
    std::int64_t d = 0, prev = in;
    for (auto h : hidden) {
        d += prev * h + h;
        prev = h;
    }
    return d + prev * out + out;
}

Batch vector_batch(std::int64_t n, std::int64_t dim, std::uint64_t seed, std::int32_t classes) {
    Rng rng(seed);
    Tensor images = Tensor::zeros({n, dim, 1, 1});
    for (auto& v : images.values()) v = rng.uniform01();
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    for (auto& y : labels) y = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(classes)));
    return Batch{std::move(images), std::move(labels)};
}

}  // namespace

TEST_CASE("registered architectures have the analytic parameter counts") {
    CHECK(build_model("mlp-small", 0).param_count() == mlp_param_count(784, {32}, 10));
    CHECK(build_model("mlp-deep-narrow", 0).param_count() ==
          mlp_param_count(784, {32, 16, 48, 16, 96, 16, 256, 16}, 10));
    // conv1 3->8 k3 + res 8 k3 + fc 512->32 + fc 32->10
    const std::int64_t convnet_d =
        (3 * 8 * 9 + 8) + (8 * 8 * 9 + 8) + (512 * 32 + 32) + (32 * 10 + 10);
    CHECK(build_model("convnet-small", 0).param_count() == convnet_d);
    CHECK(build_model("mlp:20-11-5", 0).param_count() == mlp_param_count(20, {11}, 5));
}

TEST_CASE("seeds change values but not structure") {
    Model a = build_model("mlp-small", 0);
    Model b = build_model("mlp-small", 1);
    REQUIRE(a.param_count() == b.param_count());
    bool any_diff = false;
    for (std::int64_t q = 0; q < a.param_count(); ++q)
        any_diff |= (a.values()[static_cast<std::size_t>(q)] !=
                     b.values()[static_cast<std::size_t>(q)]);
    CHECK(any_diff);

    // segment table identical across seeds
    REQUIRE(a.segments().size() == b.segments().size());
    for (std::size_t i = 0; i < a.segments().size(); ++i) {
        CHECK(a.segments()[i].layer_name == b.segments()[i].layer_name);
        CHECK(a.segments()[i].offset == b.segments()[i].offset);
        CHECK(a.segments()[i].length == b.segments()[i].length);
    }
}

TEST_CASE("same seed rebuilds bit-identical parameters") {
    Model a = build_model("convnet-small", 3);
    Model b = build_model("convnet-small", 3);
    for (std::int64_t q = 0; q < a.param_count(); ++q)
        CHECK(a.values()[static_cast<std::size_t>(q)] == b.values()[static_cast<std::size_t>(q)]);
}

TEST_CASE("biases start at zero") {
    Model model = build_model("convnet-small", 2);
    for (const auto& seg : model.segments()) {
        if (seg.kind != SegmentKind::bias) continue;
        for (std::int64_t i = 0; i < seg.length; ++i)
            CHECK(model.values()[static_cast<std::size_t>(seg.offset + i)] == 0.0);
    }
}

TEST_CASE("convnet forward on a zero image returns the final bias") {
    Model model = build_model("convnet-small", 0);
    Batch batch{Tensor::zeros({2, 3, 32, 32}), {0, 1}};
    const Tensor out = model.logits(batch);
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("flatten then assign is the identity") {
    Model model = build_model("mlp-small", 4);
    Batch batch = vector_batch(3, 784, 1, 10);
    const Tensor before = model.logits(batch);
    ParamVector pv = model.flatten();
    model.assign(pv);
    const Tensor after = model.logits(batch);
    for (std::int64_t i = 0; i < before.numel(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("all-zero parameters give the uniform-softmax loss") {
    Model model = build_model("mlp-small", 4);
    ParamVector pv = model.flatten();
    std::fill(pv.values.begin(), pv.values.end(), 0.0);
    model.assign(pv);
    Batch batch = vector_batch(5, 784, 2, 10);
    CHECK(model.forward_loss(batch).loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("assign with the wrong length is rejected") {
    Model model = build_model("mlp:6-3", 0);
    ParamVector pv;
    pv.values.assign(5, 0.0);
    CHECK_THROWS_AS(model.assign(pv), LengthMismatch);
}

TEST_CASE("unknown architecture is rejected") {
    CHECK_THROWS_AS(build_model("resnet151", 0), UnknownArchitecture);
    CHECK_THROWS_AS(build_model("mlp:banana", 0), UnknownArchitecture);
}

TEST_CASE("final-layer perturbation only moves that output unit") {
    Model model = build_model("mlp:10-6-4", 0);
    Batch batch = vector_batch(3, 10, 7, 4);
    const Tensor base = model.logits(batch);

    // fc2 weight row 2 is the segment slice feeding logit 2
    const auto& segs = model.segments();
    const LayerSegment* fc2 = nullptr;
    for (const auto& s : segs)
        if (s.layer_name == "fc2" && s.kind == SegmentKind::weight) fc2 = &s;
    REQUIRE(fc2 != nullptr);
    ParamVector pv = model.flatten();
    pv.values[static_cast<std::size_t>(fc2->offset + 2 * 6 + 1)] += 0.25;
    model.assign(pv);
    const Tensor moved = model.logits(batch);

    for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t c = 0; c < 4; ++c) {
            if (c == 2) continue;
            CHECK(moved[b * 4 + c] == base[b * 4 + c]);
        }
}

TEST_CASE("deep narrow fixture keeps its bottleneck under two percent") {
    Model model = build_model("mlp-deep-narrow", 0);
    std::int64_t smallest = model.param_count();
    for (const auto& seg : model.segments())
        if (seg.kind == SegmentKind::weight) smallest = std::min(smallest, seg.length);
    CHECK(static_cast<double>(smallest) / static_cast<double>(model.param_count()) < 0.02);
}

TEST_CASE("segments tile the parameter vector") {
    Model model = build_model("convnet-small", 0);
    std::int64_t expected_offset = 0;
    for (const auto& seg : model.segments()) {
        CHECK(seg.offset == expected_offset);
        expected_offset += seg.length;
        CHECK(seg.prunable == (seg.kind == SegmentKind::weight));
    }
    CHECK(expected_offset == model.param_count());
}

TEST_CASE("empty batch is rejected") {
    Model model = build_model("mlp:4-2", 0);
    Batch batch{Tensor::zeros({0, 4, 1, 1}), {}};
    CHECK_THROWS_AS(model.forward_loss(batch), InvalidArgument);
}
