// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "duplexsim/tensor.hpp"

namespace {

using namespace duplexsim;
namespace k = duplexsim::kernels;

// Direct-definition convolution with explicit bounds checks.
Tensor naive_conv(const Tensor& x, const Tensor& w) {
    const auto xs = x.shape(), ws = w.shape();
    const long pad = static_cast<long>(ws.h / 2);
    Tensor y(Shape4{xs.n, ws.n, xs.h, xs.w});
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t co = 0; co < ws.n; ++co)
            for (std::size_t h = 0; h < xs.h; ++h)
                for (std::size_t ww = 0; ww < xs.w; ++ww) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < xs.c; ++ci)
                        for (std::size_t a = 0; a < ws.h; ++a)
                            for (std::size_t b = 0; b < ws.w; ++b) {
                                const long ih = static_cast<long>(h + a) - pad;
                                const long iw = static_cast<long>(ww + b) - pad;
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(xs.h) || iw >= static_cast<long>(xs.w))
                                    continue;
                                acc += w.at(co, ci, a, b) * x.at(n, ci, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
                            }
                    y.at(n, co, h, ww) = acc;
                }
    return y;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

TEST(Tensor, ShapeAndIndexing) {
    Tensor t(Shape4{2, 3, 4, 5});
    EXPECT_EQ(t.size(), 120u);
    t.at(1, 2, 3, 4) = 7.0;
    EXPECT_EQ(t[119], 7.0);
    t.at(0, 1, 0, 0) = 1.0;
    EXPECT_EQ(t[20], 1.0);
    EXPECT_THROW(Tensor(Shape4{1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, ArithmeticRejectsShapeMismatch) {
    Tensor a(Shape4{1, 2, 2, 2}, 1.0), b(Shape4{1, 2, 2, 1}, 1.0);
    EXPECT_THROW(a += b, ShapeError);
    Tensor c = a + a;
    EXPECT_EQ(c[3], 2.0);
    EXPECT_EQ(max_abs_diff(c - a, a), 0.0);
}

TEST(Conv, MatchesDirectDefinition) {
    std::mt19937_64 rng(1);
    for (std::size_t kk : {1u, 3u, 5u}) {
        const auto x = random_normal(Shape4{2, 3, 6, 7}, rng);
        const auto w = random_normal(Shape4{4, 3, kk, kk}, rng);
        EXPECT_LT(max_abs_diff(k::conv2d(x, w), naive_conv(x, w)), 1e-12) << "k=" << kk;
    }
}

TEST(Conv, RejectsEvenKernelAndChannelMismatch) {
    Tensor x(Shape4{1, 2, 4, 4}), w_even(Shape4{1, 2, 2, 2}), w_bad(Shape4{1, 3, 3, 3});
    EXPECT_THROW(k::conv2d(x, w_even), ShapeError);
    EXPECT_THROW(k::conv2d(x, w_bad), ShapeError);
}

TEST(Conv, InputGradIsAdjoint) {
    // <conv(x, w), dy> == <x, conv_input_grad(dy, w)>
    std::mt19937_64 rng(2);
    const auto x = random_normal(Shape4{2, 3, 5, 6}, rng);
    const auto w = random_normal(Shape4{4, 3, 3, 3}, rng);
    const auto dy = random_normal(Shape4{2, 4, 5, 6}, rng);
    const double lhs = dot(k::conv2d(x, w), dy);
    const double rhs = dot(x, k::conv2d_input_grad(dy, w, 3));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::fabs(lhs)));
}

TEST(Conv, WeightGradIsAdjoint) {
    // <conv(x, w), dy> == <w, conv_weight_grad(x, dy)>
    std::mt19937_64 rng(3);
    const auto x = random_normal(Shape4{3, 2, 4, 4}, rng);
    const auto w = random_normal(Shape4{5, 2, 3, 3}, rng);
    const auto dy = random_normal(Shape4{3, 5, 4, 4}, rng);
    const double lhs = dot(k::conv2d(x, w), dy);
    const double rhs = dot(w, k::conv2d_weight_grad(x, dy, 3));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::fabs(lhs)));
}

TEST(Pool, AveragesWindowsAndZeroPads) {
    Tensor x(Shape4{1, 1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) x[i] = static_cast<double>(i + 1);
    const auto y = k::avg_pool(x, 2);
    ASSERT_EQ(y.shape(), (Shape4{1, 1, 2, 2}));
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), (1 + 2 + 4 + 5) / 4.0);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), (3 + 6) / 4.0);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9 / 4.0);
    EXPECT_EQ(k::avg_pool(x, 1), x);
    EXPECT_THROW(k::avg_pool(x, 0), ShapeError);
}

TEST(Pool, GlobalAverageAndGrad) {
    std::mt19937_64 rng(4);
    const auto x = random_normal(Shape4{2, 3, 4, 5}, rng);
    const auto y = k::global_avg_pool(x);
    const auto dy = random_normal(y.shape(), rng);
    EXPECT_NEAR(dot(y, dy), dot(x, k::global_avg_pool_grad(dy, 4, 5)), 1e-12);
}

TEST(Channels, ConcatSplitRoundTrip) {
    std::mt19937_64 rng(5);
    const auto a = random_normal(Shape4{2, 3, 2, 2}, rng);
    const auto b = random_normal(Shape4{2, 4, 2, 2}, rng);
    const auto c = k::concat_channels(a, b);
    EXPECT_EQ(c.at(1, 3, 1, 0), b.at(1, 0, 1, 0));
    const auto [a2, b2] = k::split_channels(c, 3);
    EXPECT_EQ(a2, a);
    EXPECT_EQ(b2, b);
    EXPECT_THROW(k::split_channels(c, 8), ShapeError);
}

TEST(Activation, ReluAndMask) {
    Tensor t(Shape4{1, 1, 1, 4}, std::vector<double>{-1, 0, 2, -0.5});
    const Tensor g(Shape4{1, 1, 1, 4}, std::vector<double>{1, 1, 1, 1});
    EXPECT_EQ(k::relu_mask(g, t).values(), (std::vector<double>{0, 0, 1, 0}));
    k::relu_inplace(t);
    EXPECT_EQ(t.values(), (std::vector<double>{0, 0, 2, 0}));
}

TEST(Activation, ChannelAffine) {
    Tensor t(Shape4{1, 2, 1, 2}, std::vector<double>{1, 2, 3, 4});
    const std::vector<double> s{2, -1}, b{1, 0};
    k::channel_affine_inplace(t, s, b);
    EXPECT_EQ(t.values(), (std::vector<double>{3, 5, -3, -4}));
}

} // namespace
