// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Block floating point: a group of values shares one exponent (the largest
// element exponent) and keeps a sign bit plus a truncated magnitude mantissa
// per lane. The default 4/5/9 layout packs one group into 58 bits, which is
// also the word width of the eDRAM arrays modeled in memory.hpp.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duplexsim/error.hpp"

namespace duplexsim::bfp {

struct BfpConfig {
    int exp_bits = 4;
    int man_bits = 5;  // magnitude bits, sign excluded
    int group_size = 9;
    int exp_bias = 12; // unbiased exponent range is [-exp_bias, 2^exp_bits - 1 - exp_bias]

    void validate() const {
        if (exp_bits < 1 || exp_bits > 16) throw EncodingError("bfp: exp_bits must be in [1, 16]");
        if (man_bits < 1 || man_bits > 24) throw EncodingError("bfp: man_bits must be in [1, 24]");
        if (group_size < 1) throw EncodingError("bfp: group_size must be >= 1");
    }

    [[nodiscard]] int encoded_size_bits() const { return exp_bits + group_size * (man_bits + 1); }
    [[nodiscard]] std::uint32_t max_code() const { return (1u << exp_bits) - 1u; }
    [[nodiscard]] int min_exponent() const { return -exp_bias; }
    [[nodiscard]] int max_exponent() const { return static_cast<int>(max_code()) - exp_bias; }
    [[nodiscard]] std::uint32_t max_mantissa() const { return (1u << man_bits) - 1u; }
    /// Largest representable magnitude (15.5 at the default point).
    [[nodiscard]] double max_magnitude() const {
        return std::ldexp(static_cast<double>(max_mantissa()), max_exponent() - man_bits + 1);
    }
    /// Effective storage bits per number (58/9 ~= 6.4 at the default point).
    [[nodiscard]] double bits_per_value() const {
        return static_cast<double>(encoded_size_bits()) / group_size;
    }

    friend bool operator==(const BfpConfig&, const BfpConfig&) = default;
};

struct BfpGroup {
    std::uint32_t shared_exp = 0; // biased code
    std::vector<std::uint8_t> signs;
    std::vector<std::uint32_t> mantissas;

    [[nodiscard]] bool all_mantissas_zero() const {
        return std::all_of(mantissas.begin(), mantissas.end(), [](std::uint32_t m) { return m == 0; });
    }
    /// Every stored bit is zero: the group PE checkpoint 1 skips.
    [[nodiscard]] bool is_zero() const { return shared_exp == 0 && all_mantissas_zero(); }

    friend bool operator==(const BfpGroup&, const BfpGroup&) = default;
};

namespace detail {

/// floor(log2(|v|)) for finite nonzero v.
inline int binary_exponent(double v) {
    int e = 0;
    std::frexp(v, &e);
    return e - 1;
}

/// Scale of one mantissa LSB for an unbiased shared exponent.
inline int lsb_exponent(int shared_exponent, const BfpConfig& cfg) {
    return shared_exponent - cfg.man_bits + 1;
}

/// Shared exponent (unbiased, clamped) of a run of values; nullopt-like
/// sentinel `cfg.min_exponent() - 1` when every value is zero.
inline int shared_exponent_of(std::span<const double> values, const BfpConfig& cfg, bool& all_zero) {
    int e_max = 0;
    all_zero = true;
    for (double v : values) {
        if (!std::isfinite(v)) throw EncodingError("bfp: non-finite value cannot be encoded");
        if (v == 0.0) continue;
        const int e = binary_exponent(v);
        if (all_zero || e > e_max) e_max = e;
        all_zero = false;
    }
    if (all_zero) return cfg.min_exponent();
    return std::clamp(e_max, cfg.min_exponent(), cfg.max_exponent());
}

inline std::uint32_t mantissa_of(double v, int lsb_exp, const BfpConfig& cfg) {
    const double scaled = std::floor(std::ldexp(std::fabs(v), -lsb_exp));
    if (scaled >= static_cast<double>(cfg.max_mantissa())) return cfg.max_mantissa();
    return static_cast<std::uint32_t>(scaled);
}

} // namespace detail

/// Encodes `values` (at most group_size of them; missing lanes are zero).
inline BfpGroup encode_group(std::span<const double> values, const BfpConfig& cfg) {
    cfg.validate();
    if (values.size() > static_cast<std::size_t>(cfg.group_size))
        throw EncodingError("bfp: more values than group_size");
    BfpGroup g;
    g.signs.assign(cfg.group_size, 0);
    g.mantissas.assign(cfg.group_size, 0);
    bool all_zero = true;
    const int e = detail::shared_exponent_of(values, cfg, all_zero);
    if (all_zero) {
        g.shared_exp = 0;
        return g;
    }
    g.shared_exp = static_cast<std::uint32_t>(e + cfg.exp_bias);
    const int lsb = detail::lsb_exponent(e, cfg);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint32_t m = detail::mantissa_of(values[i], lsb, cfg);
        g.mantissas[i] = m;
        // a truncated-to-zero lane carries no sign so that decode(-tiny) is +0
        g.signs[i] = (m != 0 && values[i] < 0.0) ? 1 : 0;
    }
    return g;
}

inline void check_group(const BfpGroup& g, const BfpConfig& cfg) {
    if (g.signs.size() != static_cast<std::size_t>(cfg.group_size) ||
        g.mantissas.size() != static_cast<std::size_t>(cfg.group_size))
        throw EncodingError("bfp: group lane count does not match config");
    if (g.shared_exp > cfg.max_code()) throw EncodingError("bfp: shared exponent code out of range");
    for (auto m : g.mantissas)
        if (m > cfg.max_mantissa()) throw EncodingError("bfp: mantissa out of range");
}

inline double decode_lane(const BfpGroup& g, std::size_t lane, const BfpConfig& cfg) {
    const int e = static_cast<int>(g.shared_exp) - cfg.exp_bias;
    const double mag = std::ldexp(static_cast<double>(g.mantissas[lane]), detail::lsb_exponent(e, cfg));
    return g.signs[lane] ? -mag : mag;
}

inline std::vector<double> decode_group(const BfpGroup& g, const BfpConfig& cfg) {
    check_group(g, cfg);
    std::vector<double> out(cfg.group_size);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = decode_lane(g, i, cfg);
    return out;
}

struct DotResult {
    double value = 0.0;
    bool zero_operand = false;    // checkpoint 1: one group is entirely zero
    int gated_lanes = 0;          // checkpoint 2: lanes where one mantissa is zero
};

/// Integer mantissa dot product with a single exponent addition.
inline DotResult dot_groups(const BfpGroup& a, const BfpGroup& b, const BfpConfig& cfg) {
    check_group(a, cfg);
    check_group(b, cfg);
    DotResult r;
    if (a.is_zero() || b.is_zero()) {
        r.zero_operand = true;
        return r;
    }
    std::int64_t acc = 0;
    for (int i = 0; i < cfg.group_size; ++i) {
        const auto ma = static_cast<std::int64_t>(a.mantissas[i]);
        const auto mb = static_cast<std::int64_t>(b.mantissas[i]);
        if (ma == 0 || mb == 0) {
            ++r.gated_lanes;
            continue;
        }
        const std::int64_t p = ma * mb;
        acc += (a.signs[i] ^ b.signs[i]) ? -p : p;
    }
    const int ea = static_cast<int>(a.shared_exp) - cfg.exp_bias;
    const int eb = static_cast<int>(b.shared_exp) - cfg.exp_bias;
    r.value = std::ldexp(static_cast<double>(acc),
                         detail::lsb_exponent(ea, cfg) + detail::lsb_exponent(eb, cfg));
    return r;
}

// Bit-level serialization: shared exponent in the top exp_bits, then lanes
// (sign, mantissa) with lane 0 most significant. Only layouts of <= 64 bits
// fit a single word; that covers the default 58-bit group.

inline std::uint64_t pack_group(const BfpGroup& g, const BfpConfig& cfg) {
    check_group(g, cfg);
    if (cfg.encoded_size_bits() > 64) throw EncodingError("bfp: group does not fit in 64 bits");
    std::uint64_t w = g.shared_exp;
    for (int i = 0; i < cfg.group_size; ++i) {
        w = (w << 1) | g.signs[i];
        w = (w << cfg.man_bits) | g.mantissas[i];
    }
    return w;
}

inline BfpGroup unpack_group(std::uint64_t w, const BfpConfig& cfg) {
    cfg.validate();
    if (cfg.encoded_size_bits() > 64) throw EncodingError("bfp: group does not fit in 64 bits");
    BfpGroup g;
    g.signs.assign(cfg.group_size, 0);
    g.mantissas.assign(cfg.group_size, 0);
    const std::uint64_t man_mask = (std::uint64_t{1} << cfg.man_bits) - 1;
    for (int i = cfg.group_size - 1; i >= 0; --i) {
        g.mantissas[i] = static_cast<std::uint32_t>(w & man_mask);
        w >>= cfg.man_bits;
        g.signs[i] = static_cast<std::uint8_t>(w & 1u);
        w >>= 1;
    }
    g.shared_exp = static_cast<std::uint32_t>(w & cfg.max_code());
    return g;
}

inline std::string to_bitstring(const BfpGroup& g, const BfpConfig& cfg) {
    const std::uint64_t w = pack_group(g, cfg);
    const int n = cfg.encoded_size_bits();
    std::string s(n, '0');
    for (int i = 0; i < n; ++i)
        if ((w >> (n - 1 - i)) & 1u) s[i] = '1';
    return s;
}

// ---------------------------------------------------------------------------
// Tensors

struct BfpTensor {
    std::vector<std::size_t> shape;
    std::size_t grouping_axis = 0;
    std::vector<BfpGroup> groups;
    std::size_t pad_count = 0; // padded lanes in the last group of each row
    BfpConfig config;

    [[nodiscard]] std::size_t groups_per_row() const {
        const std::size_t n = shape[grouping_axis];
        const auto g = static_cast<std::size_t>(config.group_size);
        return (n + g - 1) / g;
    }
};

namespace detail {

struct AxisLayout {
    std::size_t outer = 1; // product of dims before the axis
    std::size_t extent = 0;
    std::size_t inner = 1; // product of dims after the axis (element stride along the axis)
};

inline AxisLayout axis_layout(const std::vector<std::size_t>& shape, std::size_t axis) {
    if (shape.empty()) throw EncodingError("bfp: empty shape");
    if (axis >= shape.size()) throw EncodingError("bfp: grouping axis out of range");
    AxisLayout l;
    for (std::size_t d = 0; d < axis; ++d) l.outer *= shape[d];
    l.extent = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) l.inner *= shape[d];
    if (l.outer * l.extent * l.inner == 0) throw EncodingError("bfp: empty tensor");
    return l;
}

} // namespace detail

/// Tiles `axis` into groups. Rows are the remaining index combinations in
/// row-major order; groups of one row are contiguous in `groups`.
inline BfpTensor quantize_tensor(std::span<const double> data, const std::vector<std::size_t>& shape,
                                 std::size_t axis, const BfpConfig& cfg) {
    cfg.validate();
    const auto l = detail::axis_layout(shape, axis);
    if (data.size() != l.outer * l.extent * l.inner) throw EncodingError("bfp: data size does not match shape");
    BfpTensor t;
    t.shape = shape;
    t.grouping_axis = axis;
    t.config = cfg;
    const auto gs = static_cast<std::size_t>(cfg.group_size);
    const std::size_t per_row = (l.extent + gs - 1) / gs;
    t.pad_count = per_row * gs - l.extent;
    t.groups.reserve(l.outer * l.inner * per_row);
    std::vector<double> lane(gs);
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
            for (std::size_t g = 0; g < per_row; ++g) {
                const std::size_t begin = g * gs;
                const std::size_t count = std::min(gs, l.extent - begin);
                for (std::size_t i = 0; i < count; ++i)
                    lane[i] = data[(o * l.extent + begin + i) * l.inner + in];
                t.groups.push_back(encode_group(std::span<const double>(lane.data(), count), cfg));
            }
        }
    }
    return t;
}

inline std::vector<double> dequantize_tensor(const BfpTensor& t) {
    const auto l = detail::axis_layout(t.shape, t.grouping_axis);
    const auto gs = static_cast<std::size_t>(t.config.group_size);
    const std::size_t per_row = t.groups_per_row();
    if (t.groups.size() != l.outer * l.inner * per_row) throw EncodingError("bfp: group count does not match shape");
    std::vector<double> out(l.outer * l.extent * l.inner);
    std::size_t gi = 0;
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
            for (std::size_t g = 0; g < per_row; ++g, ++gi) {
                const std::size_t begin = g * gs;
                const std::size_t count = std::min(gs, l.extent - begin);
                for (std::size_t i = 0; i < count; ++i)
                    out[(o * l.extent + begin + i) * l.inner + in] = decode_lane(t.groups[gi], i, t.config);
            }
        }
    }
    return out;
}

/// In-place encode/decode along `axis` without materializing groups; produces
/// exactly dequantize_tensor(quantize_tensor(...)).
inline void fake_quantize(std::span<double> data, const std::vector<std::size_t>& shape, std::size_t axis,
                          const BfpConfig& cfg) {
    const auto l = detail::axis_layout(shape, axis);
    if (data.size() != l.outer * l.extent * l.inner) throw EncodingError("bfp: data size does not match shape");
    const auto gs = static_cast<std::size_t>(cfg.group_size);
    const std::uint32_t max_m = cfg.max_mantissa();
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
            for (std::size_t begin = 0; begin < l.extent; begin += gs) {
                const std::size_t count = std::min(gs, l.extent - begin);
                auto at = [&](std::size_t i) -> double& { return data[(o * l.extent + begin + i) * l.inner + in]; };
                bool all_zero = true;
                int e_max = 0;
                for (std::size_t i = 0; i < count; ++i) {
                    const double v = at(i);
                    if (!std::isfinite(v)) throw EncodingError("bfp: non-finite value cannot be encoded");
                    if (v == 0.0) continue;
                    const int e = detail::binary_exponent(v);
                    if (all_zero || e > e_max) e_max = e;
                    all_zero = false;
                }
                if (all_zero) {
                    for (std::size_t i = 0; i < count; ++i) at(i) = 0.0;
                    continue;
                }
                const int lsb = detail::lsb_exponent(std::clamp(e_max, cfg.min_exponent(), cfg.max_exponent()), cfg);
                for (std::size_t i = 0; i < count; ++i) {
                    double& v = at(i);
                    double m = std::floor(std::ldexp(std::fabs(v), -lsb));
                    if (m > max_m) m = max_m;
                    v = (m == 0.0) ? 0.0 : std::copysign(std::ldexp(m, lsb), v);
                }
            }
        }
    }
}

} // namespace duplexsim::bfp
