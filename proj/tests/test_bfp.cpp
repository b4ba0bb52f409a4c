// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "duplexsim/bfp.hpp"

namespace {

using namespace duplexsim;
using bfp::BfpConfig;

// Reference encoder written against the format description only: shared
// exponent = floor(log2 max|v|) clamped to the code range, LSB = 2^(e - 4),
// magnitudes truncated and saturated at 31.
struct RefGroup {
    int exponent = 0;
    std::vector<int> values; // signed mantissas
};

RefGroup ref_encode(const std::vector<double>& v) {
    RefGroup g;
    g.values.assign(9, 0);
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, std::fabs(x));
    if (mx == 0.0) {
        g.exponent = -12;
        return g;
    }
    int e = std::ilogb(mx);
    e = std::min(3, std::max(-12, e));
    g.exponent = e;
    const double lsb = std::pow(2.0, e - 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
        double m = std::trunc(std::fabs(v[i]) / lsb);
        m = std::min(m, 31.0);
        g.values[i] = static_cast<int>(v[i] < 0 ? -m : m);
    }
    return g;
}

double ref_decode(const RefGroup& g, std::size_t i) { return g.values[i] * std::pow(2.0, g.exponent - 4); }

std::vector<double> random_group(std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(9);
    for (auto& x : v) x = d(rng);
    return v;
}

TEST(BfpConfig, GroupIsFiftyEightBits) {
    const BfpConfig cfg;
    EXPECT_EQ(cfg.encoded_size_bits(), 4 + (5 + 1) * 9);
    EXPECT_EQ(cfg.encoded_size_bits(), 58);
    EXPECT_NEAR(cfg.bits_per_value(), 6.4, 0.05);
}

TEST(BfpConfig, ExponentRangeAndMaxMagnitude) {
    const BfpConfig cfg;
    EXPECT_EQ(cfg.min_exponent(), -12);
    EXPECT_EQ(cfg.max_exponent(), 3);
    EXPECT_EQ(cfg.max_mantissa(), 31u);
    EXPECT_DOUBLE_EQ(cfg.max_magnitude(), 15.5);
}

TEST(BfpConfig, RejectsInvalidWidths) {
    BfpConfig cfg;
    cfg.exp_bits = 0;
    EXPECT_THROW(cfg.validate(), EncodingError);
    cfg = {};
    cfg.man_bits = 0;
    EXPECT_THROW(cfg.validate(), EncodingError);
    cfg = {};
    cfg.group_size = 0;
    EXPECT_THROW(cfg.validate(), EncodingError);
}

TEST(BfpGroup, GoldenOneHalfQuarter) {
    const BfpConfig cfg;
    const std::vector<double> v{1.0, 0.5, 0.25, 0, 0, 0, 0, 0, 0};
    const auto g = bfp::encode_group(v, cfg);
    EXPECT_EQ(g.shared_exp, 12u);
    EXPECT_EQ(g.mantissas[0], 16u);
    EXPECT_EQ(g.mantissas[1], 8u);
    EXPECT_EQ(g.mantissas[2], 4u);
    EXPECT_EQ(bfp::to_bitstring(g, cfg),
              "1100"
              "010000"
              "001000"
              "000100"
              "000000000000000000000000000000000000");
    EXPECT_EQ(bfp::decode_group(g, cfg), v);
}

TEST(BfpGroup, GoldenNegativeAndSaturated) {
    const BfpConfig cfg;
    // 100 clamps to exponent 3: mantissa saturates at 31 (15.5)
    const std::vector<double> v{-3.0, 100.0};
    const auto g = bfp::encode_group(v, cfg);
    EXPECT_EQ(g.shared_exp, 15u);
    EXPECT_EQ(g.signs[0], 1);
    EXPECT_EQ(g.mantissas[0], 6u); // 3 / 0.5
    EXPECT_EQ(g.mantissas[1], 31u);
    EXPECT_DOUBLE_EQ(bfp::decode_lane(g, 0, cfg), -3.0);
    EXPECT_DOUBLE_EQ(bfp::decode_lane(g, 1, cfg), 15.5);
}

TEST(BfpGroup, AllZeroGroupIsZeroBits) {
    const BfpConfig cfg;
    const auto g = bfp::encode_group(std::vector<double>(9, 0.0), cfg);
    EXPECT_TRUE(g.is_zero());
    EXPECT_EQ(bfp::pack_group(g, cfg), 0u);
}

TEST(BfpGroup, TinyValuesFlushToZero) {
    const BfpConfig cfg;
    const std::vector<double> v{1e-9, -1e-9};
    const auto g = bfp::encode_group(v, cfg);
    EXPECT_TRUE(g.all_mantissas_zero());
    EXPECT_EQ(bfp::decode_lane(g, 1, cfg), 0.0);
    EXPECT_FALSE(std::signbit(bfp::decode_lane(g, 1, cfg)));
}

TEST(BfpGroup, RejectsNonFiniteAndOversizedInput) {
    const BfpConfig cfg;
    EXPECT_THROW(bfp::encode_group(std::vector<double>{NAN}, cfg), EncodingError);
    EXPECT_THROW(bfp::encode_group(std::vector<double>{INFINITY}, cfg), EncodingError);
    EXPECT_THROW(bfp::encode_group(std::vector<double>(10, 1.0), cfg), EncodingError);
}

TEST(BfpGroup, MatchesReferenceEncoder) {
    const BfpConfig cfg;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> scale_exp(-16.0, 6.0);
    for (int t = 0; t < 5000; ++t) {
        const auto v = random_group(rng, std::pow(2.0, scale_exp(rng)));
        const auto g = bfp::encode_group(v, cfg);
        const auto r = ref_encode(v);
        for (std::size_t i = 0; i < 9; ++i) ASSERT_EQ(bfp::decode_lane(g, i, cfg), ref_decode(r, i)) << "trial " << t;
    }
}

TEST(BfpGroup, PackUnpackRoundTrip) {
    const BfpConfig cfg;
    std::mt19937_64 rng(3);
    for (int t = 0; t < 2000; ++t) {
        const auto g = bfp::encode_group(random_group(rng, 1.0), cfg);
        const auto w = bfp::pack_group(g, cfg);
        EXPECT_LT(w, std::uint64_t{1} << 58);
        EXPECT_EQ(bfp::unpack_group(w, cfg), g);
    }
}

TEST(BfpGroup, ErrorBoundedByOneLsb) {
    const BfpConfig cfg;
    std::mt19937_64 rng(5);
    for (int t = 0; t < 2000; ++t) {
        const auto v = random_group(rng, 0.7);
        const auto g = bfp::encode_group(v, cfg);
        const int e = static_cast<int>(g.shared_exp) - cfg.exp_bias;
        const double lsb = std::ldexp(1.0, e - cfg.man_bits + 1);
        for (std::size_t i = 0; i < 9; ++i) {
            const double d = bfp::decode_lane(g, i, cfg);
            EXPECT_LE(std::fabs(d), std::fabs(v[i]));         // truncation toward zero
            if (std::fabs(v[i]) <= cfg.max_magnitude()) EXPECT_LT(std::fabs(v[i]) - std::fabs(d), lsb);
        }
    }
}

TEST(BfpGroup, EncodeIsIdempotent) {
    const BfpConfig cfg;
    std::mt19937_64 rng(9);
    for (int t = 0; t < 2000; ++t) {
        const auto d1 = bfp::decode_group(bfp::encode_group(random_group(rng, 2.0), cfg), cfg);
        const auto d2 = bfp::decode_group(bfp::encode_group(d1, cfg), cfg);
        EXPECT_EQ(d1, d2);
    }
}

TEST(BfpDot, EqualsDecodedDotProduct) {
    const BfpConfig cfg;
    std::mt19937_64 rng(21);
    for (int t = 0; t < 10000; ++t) {
        const auto a = bfp::encode_group(random_group(rng, 1.5), cfg);
        const auto b = bfp::encode_group(random_group(rng, 0.3), cfg);
        const auto da = bfp::decode_group(a, cfg), db = bfp::decode_group(b, cfg);
        double ref = 0.0;
        for (std::size_t i = 0; i < 9; ++i) ref += da[i] * db[i];
        ASSERT_EQ(bfp::dot_groups(a, b, cfg).value, ref);
    }
}

TEST(BfpDot, ZeroOperandAndGatedLanes) {
    const BfpConfig cfg;
    const auto z = bfp::encode_group(std::vector<double>(9, 0.0), cfg);
    const auto a = bfp::encode_group(std::vector<double>{1, 0, 1, 0, 1, 0, 1, 0, 1}, cfg);
    const auto r0 = bfp::dot_groups(a, z, cfg);
    EXPECT_TRUE(r0.zero_operand);
    EXPECT_EQ(r0.value, 0.0);
    const auto r1 = bfp::dot_groups(a, a, cfg);
    EXPECT_FALSE(r1.zero_operand);
    EXPECT_EQ(r1.gated_lanes, 4);
    EXPECT_EQ(r1.value, 5.0);
}

TEST(BfpTensor, QuantizeAlongChannelsWithPadding) {
    const BfpConfig cfg;
    // (n=2, c=11, h=1, w=3): 2 groups per row, 7 padded lanes in the second
    std::mt19937_64 rng(2);
    std::normal_distribution<double> d;
    std::vector<double> x(2 * 11 * 3);
    for (auto& v : x) v = d(rng);
    const std::vector<std::size_t> shape{2, 11, 1, 3};
    const auto t = bfp::quantize_tensor(x, shape, 1, cfg);
    EXPECT_EQ(t.groups_per_row(), 2u);
    EXPECT_EQ(t.pad_count, 7u);
    EXPECT_EQ(t.groups.size(), 2u * 3u * 2u);
    const auto back = bfp::dequantize_tensor(t);
    // first group of row (n=0, w=1): channels 0..8 at stride 3
    std::vector<double> lane;
    for (std::size_t c = 0; c < 9; ++c) lane.push_back(x[c * 3 + 1]);
    const auto g = bfp::encode_group(lane, cfg);
    for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(back[c * 3 + 1], bfp::decode_lane(g, c, cfg));
}

TEST(BfpTensor, FakeQuantizeMatchesRoundTrip) {
    const BfpConfig cfg;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> d(0.0, 3.0);
    const std::vector<std::size_t> shape{3, 20, 4, 5};
    std::vector<double> x(3 * 20 * 4 * 5);
    for (auto& v : x) v = d(rng);
    auto y = x;
    bfp::fake_quantize(y, shape, 1, cfg);
    EXPECT_EQ(y, bfp::dequantize_tensor(bfp::quantize_tensor(x, shape, 1, cfg)));
}

TEST(BfpTensor, RejectsBadShapes) {
    const BfpConfig cfg;
    std::vector<double> x(6, 1.0);
    EXPECT_THROW(bfp::quantize_tensor(x, {2, 4}, 1, cfg), EncodingError);
    EXPECT_THROW(bfp::quantize_tensor(x, {2, 3}, 2, cfg), EncodingError);
    EXPECT_THROW(bfp::quantize_tensor(x, {}, 0, cfg), EncodingError);
}

} // namespace
