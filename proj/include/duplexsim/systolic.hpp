// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cycle and energy model of a BFP systolic array. Each PE takes the dot
// product of two groups per cycle. Three dataflows:
//   WS_FORWARD              weights stationary, activations stream left to right
//   WS_BACKWARD_TRANSPOSED  same array, weights read transposed in place
//   ACCUM_STATIONARY        outputs stationary, drained left after accumulation

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "duplexsim/bfp.hpp"
#include "duplexsim/error.hpp"

namespace duplexsim::systolic {

enum class Dataflow { WS_FORWARD, WS_BACKWARD_TRANSPOSED, ACCUM_STATIONARY };

inline std::string_view to_string(Dataflow d) {
    switch (d) {
    case Dataflow::WS_FORWARD: return "WS_FORWARD";
    case Dataflow::WS_BACKWARD_TRANSPOSED: return "WS_BACKWARD_TRANSPOSED";
    case Dataflow::ACCUM_STATIONARY: return "ACCUM_STATIONARY";
    }
    return "?";
}

inline Dataflow parse_dataflow(std::string_view s) {
    if (s == "WS_FORWARD") return Dataflow::WS_FORWARD;
    if (s == "WS_BACKWARD_TRANSPOSED") return Dataflow::WS_BACKWARD_TRANSPOSED;
    if (s == "ACCUM_STATIONARY") return Dataflow::ACCUM_STATIONARY;
    throw ConfigError("unknown dataflow '" + std::string(s) + "'");
}

enum class CycleMode { Analytical, Detailed };

inline std::string_view to_string(CycleMode m) { return m == CycleMode::Analytical ? "analytical" : "detailed"; }

inline CycleMode parse_cycle_mode(std::string_view s) {
    if (s == "analytical") return CycleMode::Analytical;
    if (s == "detailed") return CycleMode::Detailed;
    throw ConfigError("unknown mode '" + std::string(s) + "' (expected analytical|detailed)");
}

struct ArrayConfig {
    std::size_t rows = 6;
    std::size_t cols = 6;
    double clock_hz = 5e8;
    Dataflow dataflow = Dataflow::WS_FORWARD;
    std::size_t group_size = 9;

    void validate() const {
        if (rows < 1 || cols < 1) throw ConfigError("array: rows and cols must be >= 1");
        if (group_size < 1) throw ConfigError("array: group_size must be >= 1");
        if (!(clock_hz > 0.0)) throw ConfigError("array: clock_hz must be > 0");
    }
    [[nodiscard]] std::size_t pes() const { return rows * cols; }

    friend bool operator==(const ArrayConfig&, const ArrayConfig&) = default;
};

/// Lane MACs per second.
inline double throughput(const ArrayConfig& cfg) {
    cfg.validate();
    return static_cast<double>(cfg.rows) * static_cast<double>(cfg.cols) * static_cast<double>(cfg.group_size) *
           cfg.clock_hz;
}

/// C[M,N] = A[M,K] * B[K,N], K counted in groups.
struct MatmulJob {
    std::uint64_t m = 1;
    std::uint64_t k = 1;
    std::uint64_t n = 1;
    double zero_group_fraction = 0.0;    // of activation-operand groups
    double zero_mantissa_fraction = 0.0; // of lanes in nonzero groups

    void validate() const {
        if (m < 1 || k < 1 || n < 1) throw ConfigError("job: dims must be >= 1");
        auto frac = [](double f) { return f >= 0.0 && f <= 1.0; };
        if (!frac(zero_group_fraction) || !frac(zero_mantissa_fraction))
            throw ConfigError("job: sparsity fractions must lie in [0, 1]");
    }
    [[nodiscard]] std::uint64_t group_ops() const { return m * k * n; }
    [[nodiscard]] std::uint64_t lane_macs(std::size_t group_size) const { return group_ops() * group_size; }
};

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

inline std::uint64_t analytical_cycles(const MatmulJob& job, const ArrayConfig& cfg) {
    return ceil_div(job.group_ops(), cfg.pes());
}

/// One weight tile: preload `rows` weight rows, stream M activation rows with
/// the skew of a rows x cols grid.
inline std::uint64_t ws_tile_cycles(std::uint64_t m, const ArrayConfig& cfg) {
    return cfg.rows + m + cfg.rows + cfg.cols - 2;
}

/// One output tile: K skewed accumulation steps, then a `cols`-cycle drain.
inline std::uint64_t as_tile_cycles(std::uint64_t k, const ArrayConfig& cfg) {
    return k + cfg.rows + cfg.cols - 2 + cfg.cols;
}

inline std::uint64_t detailed_cycles(const MatmulJob& job, const ArrayConfig& cfg) {
    switch (cfg.dataflow) {
    case Dataflow::WS_FORWARD:
    case Dataflow::WS_BACKWARD_TRANSPOSED:
        return ceil_div(job.k, cfg.rows) * ceil_div(job.n, cfg.cols) * ws_tile_cycles(job.m, cfg);
    case Dataflow::ACCUM_STATIONARY:
        return ceil_div(job.m, cfg.rows) * ceil_div(job.n, cfg.cols) * as_tile_cycles(job.k, cfg);
    }
    return 0;
}

inline std::uint64_t cycles(const MatmulJob& job, const ArrayConfig& cfg, CycleMode mode) {
    job.validate();
    cfg.validate();
    return mode == CycleMode::Analytical ? analytical_cycles(job, cfg) : detailed_cycles(job, cfg);
}

// ---------------------------------------------------------------------------
// Convolutions as matmuls (channel axis grouped)

struct ConvDims {
    std::uint64_t batch = 1;
    std::uint64_t in_channels = 1;
    std::uint64_t out_channels = 1;
    std::uint64_t height = 1;
    std::uint64_t width = 1;
    std::uint64_t kernel = 1;
};

/// Forward conv on the weight-stationary array: output pixels x (Cin groups * k^2) x Cout.
inline MatmulJob conv_forward_job(const ConvDims& d, std::size_t group_size) {
    return {d.batch * d.height * d.width, ceil_div(d.in_channels, group_size) * d.kernel * d.kernel, d.out_channels};
}

/// Input gradient on the transposed array: output pixels x (Cout groups * k^2) x Cin.
inline MatmulJob conv_input_grad_job(const ConvDims& d, std::size_t group_size) {
    return {d.batch * d.height * d.width, ceil_div(d.out_channels, group_size) * d.kernel * d.kernel, d.in_channels};
}

/// Weight gradient, accumulation-stationary: Cout x (pixel groups) x (Cin * k^2).
inline MatmulJob conv_weight_grad_job(const ConvDims& d, std::size_t group_size) {
    return {d.out_channels, ceil_div(d.batch * d.height * d.width, group_size), d.in_channels * d.kernel * d.kernel};
}

// ---------------------------------------------------------------------------
// Gating and energy

struct PeStats {
    std::uint64_t macs_executed = 0;     // lanes that ran the mantissa multiplier
    std::uint64_t zero_group_skips = 0;  // lanes skipped at checkpoint 1 (a zero operand group)
    std::uint64_t mantissa_gates = 0;    // lanes gated at checkpoint 2 (a zero mantissa)
    std::uint64_t group_ops = 0;

    [[nodiscard]] std::uint64_t lane_ops() const { return macs_executed + zero_group_skips + mantissa_gates; }

    PeStats& operator+=(const PeStats& o) {
        macs_executed += o.macs_executed;
        zero_group_skips += o.zero_group_skips;
        mantissa_gates += o.mantissa_gates;
        group_ops += o.group_ops;
        return *this;
    }
    friend bool operator==(const PeStats&, const PeStats&) = default;
};

/// Gating decision for one pair of aligned groups.
inline PeStats gate_pair(const bfp::BfpGroup& a, const bfp::BfpGroup& b) {
    PeStats s;
    s.group_ops = 1;
    const std::size_t lanes = a.mantissas.size();
    if (a.is_zero() || b.is_zero()) {
        s.zero_group_skips = lanes;
        return s;
    }
    for (std::size_t i = 0; i < lanes; ++i) {
        if (a.mantissas[i] == 0 || b.mantissas[i] == 0)
            ++s.mantissa_gates;
        else
            ++s.macs_executed;
    }
    return s;
}

/// Counts over two aligned operand streams.
inline PeStats gating_stats(const std::vector<bfp::BfpGroup>& a, const std::vector<bfp::BfpGroup>& b) {
    if (a.size() != b.size()) throw ShapeError("gating_stats: operand streams are not aligned");
    PeStats s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].mantissas.size() != b[i].mantissas.size()) throw ShapeError("gating_stats: lane count mismatch");
        s += gate_pair(a[i], b[i]);
    }
    return s;
}

/// Expected counts for a job described by sparsity fractions.
inline PeStats expected_stats(const MatmulJob& job, std::size_t group_size) {
    job.validate();
    PeStats s;
    s.group_ops = job.group_ops();
    const std::uint64_t lanes = job.lane_macs(group_size);
    const std::uint64_t skipped_groups =
        static_cast<std::uint64_t>(std::llround(job.zero_group_fraction * static_cast<double>(s.group_ops)));
    s.zero_group_skips = skipped_groups * group_size;
    const std::uint64_t live = lanes - s.zero_group_skips;
    s.mantissa_gates = static_cast<std::uint64_t>(std::llround(job.zero_mantissa_fraction * static_cast<double>(live)));
    s.macs_executed = live - s.mantissa_gates;
    return s;
}

struct EnergyConstants {
    double active = 1.0;
    double gated = 0.25;
    double skipped = 0.05;
    double register_write = 0.0; // per group op (output register update)

    void validate() const {
        if (skipped < 0.0 || !(skipped <= gated && gated <= active))
            throw ConfigError("energy: require 0 <= skipped <= gated <= active");
        if (register_write < 0.0) throw ConfigError("energy: register_write must be >= 0");
    }
    friend bool operator==(const EnergyConstants&, const EnergyConstants&) = default;
};

inline double job_energy(const PeStats& s, const EnergyConstants& c) {
    return static_cast<double>(s.macs_executed) * c.active + static_cast<double>(s.mantissa_gates) * c.gated +
           static_cast<double>(s.zero_group_skips) * c.skipped + static_cast<double>(s.group_ops) * c.register_write;
}

// ---------------------------------------------------------------------------
// Functional execution: numerically one matmul, visited in dataflow order.

struct MatmulResult {
    std::vector<double> c; // row-major M x N
    PeStats stats;
};

/// a: M x K groups (row-major), b: K x N groups (row-major, column groups).
inline MatmulResult run_matmul(const std::vector<bfp::BfpGroup>& a, const std::vector<bfp::BfpGroup>& b,
                               std::size_t m, std::size_t k, std::size_t n, Dataflow df, const bfp::BfpConfig& bcfg) {
    if (a.size() != m * k || b.size() != k * n) throw ShapeError("run_matmul: operand sizes do not match M, K, N");
    MatmulResult r;
    r.c.assign(m * n, 0.0);
    auto mac = [&](std::size_t i, std::size_t kk, std::size_t j) {
        const auto& ga = a[i * k + kk];
        const auto& gb = b[kk * n + j];
        r.stats += gate_pair(ga, gb);
        r.c[i * n + j] += bfp::dot_groups(ga, gb, bcfg).value;
    };
    // Accumulation order along K is fixed so every dataflow sums identically;
    // only the tile visiting order differs.
    switch (df) {
    case Dataflow::WS_FORWARD:
    case Dataflow::WS_BACKWARD_TRANSPOSED:
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t kk = 0; kk < k; ++kk) mac(i, kk, j);
        break;
    case Dataflow::ACCUM_STATIONARY:
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) mac(i, kk, j);
        break;
    }
    return r;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const MatmulJob& j) {
    return {{"m", j.m}, {"k", j.k}, {"n", j.n}, {"zero_group_fraction", j.zero_group_fraction},
            {"zero_mantissa_fraction", j.zero_mantissa_fraction}};
}

inline nlohmann::json to_json(const PeStats& s) {
    return {{"macs_executed", s.macs_executed}, {"zero_group_skips", s.zero_group_skips},
            {"mantissa_gates", s.mantissa_gates}, {"group_ops", s.group_ops}};
}

} // namespace duplexsim::systolic
