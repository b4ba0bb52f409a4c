// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "duplexsim/duplex.hpp"

namespace {

using namespace duplexsim;

DuDnnSpec tiny_spec(Variant v) {
    DuDnnSpec s;
    s.variant = v;
    s.blocks = 3;
    s.in_channels = 2;
    s.height = 6;
    s.width = 6;
    s.num_classes = 3;
    s.backbone_channels = 3;
    s.branch_channels = 2;
    return s;
}

DuDnnModel tiny_model(Variant v, std::uint64_t seed = 7) {
    auto m = init_model(tiny_spec(v), seed, 1.0);
    std::mt19937_64 rng(seed + 100);
    // larger head so branch gradients are well above finite-difference noise
    m.head_weight = random_normal(m.head_weight.shape(), rng, 1.0);
    m.head_bias = random_normal(m.head_bias.shape(), rng, 0.1);
    return m;
}

ReversibleBlockParams random_block(std::size_t c, std::mt19937_64& rng) {
    ReversibleBlockParams p;
    p.f1.weight = he_init(Shape4{c, c, 3, 3}, rng);
    p.f2.weight = he_init(Shape4{c, c, 3, 3}, rng);
    return p;
}

double loss_of(const DuDnnModel& m, const Tensor& x, const std::vector<int>& y) {
    return softmax_cross_entropy(dudnn_forward(m, x).logits, y).first;
}

TEST(ReversibleBlock, InvertRecoversInputs) {
    std::mt19937_64 rng(1);
    const auto p = random_block(4, rng);
    const auto x1 = random_normal(Shape4{2, 4, 5, 5}, rng);
    const auto x2 = random_normal(Shape4{2, 4, 5, 5}, rng);
    const auto [y1, y2] = forward_block(x1, x2, p);
    const auto [r1, r2] = invert_block(y1, y2, p);
    EXPECT_LT(max_abs_diff(r1, x1), 1e-12);
    EXPECT_LT(max_abs_diff(r2, x2), 1e-12);
}

TEST(ReversibleBlock, MatchesDefiningEquations) {
    std::mt19937_64 rng(2);
    const auto p = random_block(3, rng);
    const auto x1 = random_normal(Shape4{1, 3, 4, 4}, rng);
    const auto x2 = random_normal(Shape4{1, 3, 4, 4}, rng);
    const auto [y1, y2] = forward_block(x1, x2, p);
    // F(x) = relu(conv(x)) computed from kernels directly
    auto F = [](const Tensor& w, const Tensor& x) {
        auto t = kernels::conv2d(x, w);
        kernels::relu_inplace(t);
        return t;
    };
    const Tensor e2 = x2 + F(p.f1.weight, x1);
    const Tensor e1 = x1 + F(p.f2.weight, e2);
    EXPECT_EQ(y2, e2);
    EXPECT_EQ(y1, e1);
}

TEST(ReversibleBlock, BackwardRecomputesInputs) {
    std::mt19937_64 rng(3);
    const auto p = random_block(3, rng);
    const auto x1 = random_normal(Shape4{2, 3, 4, 4}, rng);
    const auto x2 = random_normal(Shape4{2, 3, 4, 4}, rng);
    const auto [y1, y2] = forward_block(x1, x2, p);
    const auto g1 = random_normal(y1.shape(), rng), g2 = random_normal(y2.shape(), rng);
    const auto bb = backward_block(g1, g2, y1, y2, p);
    EXPECT_LT(max_abs_diff(bb.x1, x1), 1e-12);
    EXPECT_LT(max_abs_diff(bb.x2, x2), 1e-12);
}

TEST(ReversibleBlock, RejectsMismatchedStreams) {
    std::mt19937_64 rng(4);
    const auto p = random_block(3, rng);
    const Tensor a(Shape4{1, 3, 4, 4}), b(Shape4{1, 3, 4, 5}), c(Shape4{1, 2, 4, 4});
    EXPECT_THROW(forward_block(a, b, p), ShapeError);
    EXPECT_THROW(forward_block(c, c, p), ShapeError);
}

// Storing oracle: the block gradient computed with every intermediate kept,
// checked by a scalar probe <y1, g1> + <y2, g2> under finite differences.
TEST(ReversibleBlock, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(5);
    auto p = random_block(2, rng);
    const auto x1 = random_normal(Shape4{2, 2, 4, 4}, rng);
    const auto x2 = random_normal(Shape4{2, 2, 4, 4}, rng);
    const auto g1 = random_normal(x1.shape(), rng), g2 = random_normal(x2.shape(), rng);
    auto probe = [&](const ReversibleBlockParams& q, const Tensor& a, const Tensor& b) {
        const auto [y1, y2] = forward_block(a, b, q);
        double s = 0.0;
        for (std::size_t i = 0; i < y1.size(); ++i) s += y1[i] * g1[i] + y2[i] * g2[i];
        return s;
    };
    const auto [y1, y2] = forward_block(x1, x2, p);
    const auto bb = backward_block(g1, g2, y1, y2, p);
    const double h = 1e-6;
    auto check = [&](const Tensor& analytic, auto perturb) {
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double fd = (perturb(i, h) - perturb(i, -h)) / (2 * h);
            EXPECT_NEAR(analytic[i], fd, 1e-5 + 1e-5 * std::fabs(fd)) << "index " << i;
        }
    };
    check(bb.grad.q1, [&](std::size_t i, double d) {
        auto q = p;
        q.f1.weight[i] += d;
        return probe(q, x1, x2);
    });
    check(bb.grad.q2, [&](std::size_t i, double d) {
        auto q = p;
        q.f2.weight[i] += d;
        return probe(q, x1, x2);
    });
    check(bb.grad.s, [&](std::size_t i, double d) {
        auto a = x1;
        a[i] += d;
        return probe(p, a, x2);
    });
    check(bb.grad.m, [&](std::size_t i, double d) {
        auto b = x2;
        b[i] += d;
        return probe(p, x1, b);
    });
}

class VariantGradients : public ::testing::TestWithParam<Variant> {};

TEST_P(VariantGradients, BackwardMatchesFiniteDifferences) {
    const Variant v = GetParam();
    auto m = tiny_model(v);
    std::mt19937_64 rng(9);
    const auto x = random_normal(Shape4{2, 2, 6, 6}, rng);
    const std::vector<int> y{0, 2};
    const auto fr = dudnn_forward(m, x);
    const auto [loss, dlogits] = softmax_cross_entropy(fr.logits, y);
    EXPECT_GT(loss, 0.0);
    const auto grads = dudnn_backward(m, fr.state, dlogits);
    const auto analytic = grads.flat();
    auto params = m.learnable();
    ASSERT_EQ(analytic.size(), params.size());
    const double h = 1e-6;
    for (std::size_t t = 0; t < params.size(); ++t) {
        ASSERT_EQ(analytic[t]->shape(), params[t]->shape());
        for (std::size_t i = 0; i < params[t]->size(); ++i) {
            const double keep = (*params[t])[i];
            (*params[t])[i] = keep + h;
            const double lp = loss_of(m, x, y);
            (*params[t])[i] = keep - h;
            const double lm = loss_of(m, x, y);
            (*params[t])[i] = keep;
            const double fd = (lp - lm) / (2 * h);
            EXPECT_NEAR((*analytic[t])[i], fd, 1e-6 + 1e-4 * std::fabs(fd))
                << to_string(v) << " tensor " << t << " index " << i;
        }
    }
}

INSTANTIATE_TEST_SUITE_P(AllVariants, VariantGradients,
                         ::testing::Values(Variant::DuDNN, Variant::FI, Variant::CA, Variant::BO),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Variants, LearnableParameterCountsAgree) {
    const auto base = tiny_spec(Variant::DuDNN);
    const std::size_t expect = base.learnable_parameter_count();
    EXPECT_EQ(expect, 3u * 2u * 2u * 2u * 9u + 3u * (4u + 1u));
    for (Variant v : {Variant::DuDNN, Variant::FI, Variant::CA, Variant::BO}) {
        const auto m = init_model(build_variant(base, v), 1);
        EXPECT_EQ(m.learnable_count(), expect) << to_string(v);
        EXPECT_EQ(m.spec.learnable_parameter_count(), expect);
    }
}

TEST(Variants, WiringDiffers) {
    const auto base = tiny_spec(Variant::DuDNN);
    EXPECT_EQ(build_variant(base, Variant::DuDNN).connection_count(), 3u);
    EXPECT_EQ(build_variant(base, Variant::FI).connection_count(), 3u);
    EXPECT_EQ(build_variant(base, Variant::CA).connection_count(), 1u);
    EXPECT_EQ(build_variant(base, Variant::BO).connection_count(), 0u);
    EXPECT_TRUE(init_model(build_variant(base, Variant::BO), 1).backbone.empty());
    EXPECT_EQ(init_model(build_variant(base, Variant::CA), 1).stem_proj1.shape().c, base.backbone_channels);
    EXPECT_THROW(parse_variant("ResNet"), ConfigError);
    EXPECT_EQ(parse_variant("FI"), Variant::FI);
}

TEST(Forward, RetainsOnlyFinalOutputsWhenReversible) {
    std::mt19937_64 rng(10);
    const auto x = random_normal(Shape4{1, 2, 6, 6}, rng);
    const auto du = dudnn_forward(tiny_model(Variant::DuDNN), x);
    const auto fi = dudnn_forward(tiny_model(Variant::FI), x);
    EXPECT_TRUE(du.state.stored.empty());
    EXPECT_EQ(du.state.transient_tensor_count(), 3u);
    EXPECT_EQ(du.state.static_tensor_count(), 3u);
    EXPECT_EQ(fi.state.stored.size(), 3u);
    EXPECT_EQ(fi.state.transient_tensor_count(), 3u + 1u + 4u * 3u);
}

TEST(Forward, BackboneIsUntouchedByBackward) {
    // the backbone has no gradient slots; its output reaches the branch only
    // through fixed injections
    auto m = tiny_model(Variant::DuDNN);
    std::mt19937_64 rng(11);
    const auto x = random_normal(Shape4{2, 2, 6, 6}, rng);
    const auto fr = dudnn_forward(m, x);
    const std::vector<int> y{1, 0};
    const auto grads = dudnn_backward(m, fr.state, softmax_cross_entropy(fr.logits, y).second);
    EXPECT_EQ(grads.flat().size(), 2 * m.spec.blocks + 2);
}

TEST(Forward, RejectsWrongInputShape) {
    const auto m = tiny_model(Variant::DuDNN);
    EXPECT_THROW(dudnn_forward(m, Tensor(Shape4{1, 1, 6, 6})), ShapeError);
    EXPECT_THROW(dudnn_forward(m, Tensor(Shape4{1, 2, 5, 6})), ShapeError);
}

TEST(Forward, BfpOutputsLieOnTheGrid) {
    const auto m = tiny_model(Variant::DuDNN);
    std::mt19937_64 rng(12);
    const auto x = random_normal(Shape4{2, 2, 6, 6}, rng);
    const auto num = Numerics::block_fp();
    const auto fr = dudnn_forward(m, x, num);
    EXPECT_EQ(num.quantized(fr.state.y1), fr.state.y1);
    EXPECT_EQ(num.quantized(fr.state.y2), fr.state.y2);
    EXPECT_EQ(num.quantized(fr.state.features), fr.state.features);
    // close to the exact pass: a few mantissa LSBs relative to the feature scale
    const auto ex = dudnn_forward(m, x);
    double scale = 0.0;
    for (std::size_t i = 0; i < ex.state.features.size(); ++i) scale = std::max(scale, std::abs(ex.state.features[i]));
    EXPECT_LT(max_abs_diff(fr.state.features, ex.state.features), 0.15 * scale);
}

TEST(Backward, ReadHookSeesRetainedTensors) {
    for (Variant v : {Variant::DuDNN, Variant::FI}) {
        const auto m = tiny_model(v);
        std::mt19937_64 rng(13);
        const auto x = random_normal(Shape4{1, 2, 6, 6}, rng);
        const auto fr = dudnn_forward(m, x);
        const std::vector<int> y{2};
        std::size_t reads = 0;
        (void)dudnn_backward(m, fr.state, softmax_cross_entropy(fr.logits, y).second, {},
                             [&](Tensor&) { ++reads; });
        EXPECT_EQ(reads, fr.state.transient_tensor_count()) << to_string(v);
    }
}

TEST(Loss, SoftmaxCrossEntropyValues) {
    Tensor logits(Shape4{2, 2, 1, 1}, std::vector<double>{0, 0, 1000, 0});
    const std::vector<int> y{0, 0};
    const auto [loss, g] = softmax_cross_entropy(logits, y);
    EXPECT_NEAR(loss, std::log(2.0) / 2, 1e-12);
    EXPECT_NEAR(g[0], -0.25, 1e-12);
    EXPECT_NEAR(g[1], 0.25, 1e-12);
    EXPECT_NEAR(g[2], 0.0, 1e-12);
    const std::vector<int> bad{0, 5};
    EXPECT_THROW(softmax_cross_entropy(logits, bad), ShapeError);
}

} // namespace
