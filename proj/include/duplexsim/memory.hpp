// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-chip memory: SRAM for static data (weights, pooled injections), eDRAM
// for transient activations and gradients, off-chip DRAM for whatever does
// not fit. eDRAM cells leak; a datum held longer than the retention time must
// be refreshed (read then rewritten) or it reads back as noise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "duplexsim/error.hpp"
#include "duplexsim/schedule.hpp"
#include "duplexsim/tensor.hpp"

namespace duplexsim::mem {

// ---------------------------------------------------------------------------
// Retention and refresh

struct RetentionModel {
    double hot_c = 100.0;
    double hot_us = 3.35;
    double cold_c = -30.0;
    double cold_us = 30.0;

    void validate() const {
        if (!(hot_c > cold_c)) throw ConfigError("retention: hot calibration temperature must exceed cold");
        if (!(hot_us > 0.0 && cold_us > hot_us)) throw ConfigError("retention: require 0 < hot_us < cold_us");
    }
    friend bool operator==(const RetentionModel&, const RetentionModel&) = default;
};

/// Log-linear interpolation between the calibration points; no extrapolation.
inline double retention_at(double temp_c, const RetentionModel& m = {}) {
    m.validate();
    if (!(temp_c >= m.cold_c && temp_c <= m.hot_c))
        throw ConfigError("retention: temperature " + std::to_string(temp_c) + " C outside calibrated range [" +
                          std::to_string(m.cold_c) + ", " + std::to_string(m.hot_c) + "]");
    if (temp_c == m.hot_c) return m.hot_us;
    if (temp_c == m.cold_c) return m.cold_us;
    const double a = (temp_c - m.cold_c) / (m.hot_c - m.cold_c);
    return std::exp(std::log(m.cold_us) + a * (std::log(m.hot_us) - std::log(m.cold_us)));
}

/// Refreshes needed to keep a datum alive for `lifetime`: ceil(lifetime / retention) - 1, floored at 0.
inline std::uint64_t refreshes_required(double lifetime, double retention) {
    if (!(retention > 0.0)) throw ConfigError("refresh: retention must be > 0");
    if (lifetime <= retention) return 0;
    return static_cast<std::uint64_t>(std::ceil(lifetime / retention)) - 1;
}

// ---------------------------------------------------------------------------
// Fault injection

struct FaultModel {
    double yield = 0.999;
    double noise_range = bfp::BfpConfig{}.max_magnitude(); // corrupted reads are uniform in [-range, range]

    void validate() const {
        if (!(yield > 0.0 && yield <= 1.0)) throw ConfigError("fault model: yield must be in (0, 1]");
        if (!(noise_range >= 0.0)) throw ConfigError("fault model: noise_range must be >= 0");
    }
};

enum class ReadCondition { Fresh, Expired };

inline ReadCondition read_condition(double lifetime_us, double retention_us, bool refreshed) {
    return (lifetime_us <= retention_us || refreshed) ? ReadCondition::Fresh : ReadCondition::Expired;
}

/// In place. Fresh reads: each value survives with probability `yield`, else
/// becomes uniform noise over the representable range. Expired reads: all noise.
/// Returns the number of corrupted values.
template <class Rng>
std::uint64_t read_with_faults(std::span<double> values, const FaultModel& fm, ReadCondition cond, Rng& rng) {
    fm.validate();
    std::uniform_real_distribution<double> noise(-fm.noise_range, fm.noise_range);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uint64_t corrupted = 0;
    for (double& v : values) {
        const bool bad = cond == ReadCondition::Expired || coin(rng) >= fm.yield;
        if (!bad) continue;
        v = noise(rng);
        ++corrupted;
    }
    return corrupted;
}

template <class Rng>
std::uint64_t read_with_faults(Tensor& t, const FaultModel& fm, ReadCondition cond, Rng& rng) {
    return read_with_faults(t.data(), fm, cond, rng);
}

// ---------------------------------------------------------------------------
// Banks

enum class BankKind { EDRAM, SRAM, DRAM_OFFCHIP };
enum class BankRole { Static, Transient };

inline std::string_view to_string(BankKind k) {
    switch (k) {
    case BankKind::EDRAM: return "EDRAM";
    case BankKind::SRAM: return "SRAM";
    case BankKind::DRAM_OFFCHIP: return "DRAM_OFFCHIP";
    }
    return "?";
}

inline BankKind parse_bank_kind(std::string_view s) {
    if (s == "EDRAM") return BankKind::EDRAM;
    if (s == "SRAM") return BankKind::SRAM;
    if (s == "DRAM_OFFCHIP") return BankKind::DRAM_OFFCHIP;
    throw ConfigError("unknown bank kind '" + std::string(s) + "'");
}

inline std::string_view to_string(BankRole r) { return r == BankRole::Static ? "static" : "transient"; }

inline BankRole parse_bank_role(std::string_view s) {
    if (s == "static") return BankRole::Static;
    if (s == "transient") return BankRole::Transient;
    throw ConfigError("unknown bank role '" + std::string(s) + "'");
}

/// A group of identical on-chip banks.
struct BankConfig {
    BankKind kind = BankKind::SRAM;
    BankRole role = BankRole::Static;
    std::size_t count = 1;
    std::uint64_t capacity_bytes = 8 * 1024; // per bank
    std::size_t word_bits = 58;
    std::size_t words_per_array = 1024;      // eDRAM array geometry

    void validate(std::size_t group_bits) const {
        if (kind == BankKind::DRAM_OFFCHIP) throw ConfigError("banks: off-chip DRAM is implicit, do not list it");
        if (count < 1 || capacity_bytes < 1) throw ConfigError("banks: count and capacity must be > 0");
        if (kind == BankKind::EDRAM && word_bits != group_bits)
            throw ConfigError("banks: eDRAM word width " + std::to_string(word_bits) +
                              " does not match the BFP group width " + std::to_string(group_bits));
    }
    [[nodiscard]] std::uint64_t total_bytes() const { return count * capacity_bytes; }
    friend bool operator==(const BankConfig&, const BankConfig&) = default;
};

struct MemoryEnergyConstants {
    double sram_access = 1.0;         // per 58-bit word
    double edram_access = 0.7;
    double dram_access = 100.0;
    double sram_leakage = 2e-5;       // per byte per microsecond
    double edram_leakage_ratio = 3.5; // eDRAM leaks this many times less than SRAM

    void validate() const {
        if (sram_access < 0 || edram_access < 0 || dram_access < 0 || sram_leakage < 0)
            throw ConfigError("memory energy: constants must be >= 0");
        if (!(edram_leakage_ratio > 0)) throw ConfigError("memory energy: edram_leakage_ratio must be > 0");
    }
    [[nodiscard]] double access(BankKind k) const {
        switch (k) {
        case BankKind::EDRAM: return edram_access;
        case BankKind::SRAM: return sram_access;
        case BankKind::DRAM_OFFCHIP: return dram_access;
        }
        return 0.0;
    }
    [[nodiscard]] double leakage(BankKind k) const {
        if (k == BankKind::SRAM) return sram_leakage;
        if (k == BankKind::EDRAM) return sram_leakage / edram_leakage_ratio;
        return 0.0;
    }
    friend bool operator==(const MemoryEnergyConstants&, const MemoryEnergyConstants&) = default;
};

struct Inventory {
    std::vector<BankConfig> banks;

    void validate(std::size_t group_bits) const {
        for (const auto& b : banks) b.validate(group_bits);
    }
    [[nodiscard]] std::uint64_t capacity(BankRole role) const {
        std::uint64_t c = 0;
        for (const auto& b : banks)
            if (b.role == role) c += b.total_bytes();
        return c;
    }
    [[nodiscard]] std::size_t bank_count(BankKind kind) const {
        std::size_t c = 0;
        for (const auto& b : banks)
            if (b.kind == kind) c += b.count;
        return c;
    }
};

/// Concrete bank list: one entry per physical bank.
struct Bank {
    BankKind kind;
    BankRole role;
    std::uint64_t capacity;
};

inline std::vector<Bank> expand(const Inventory& inv) {
    std::vector<Bank> out;
    for (const auto& b : inv.banks)
        for (std::size_t i = 0; i < b.count; ++i) out.push_back({b.kind, b.role, b.capacity_bytes});
    return out;
}

inline constexpr std::size_t kDramBank = static_cast<std::size_t>(-1);

struct Piece {
    std::size_t bank = 0; // index into expand(inventory), kDramBank for off-chip
    std::uint64_t bytes = 0;
    friend bool operator==(const Piece&, const Piece&) = default;
};

struct BufferRequest {
    std::string name;
    std::uint64_t bytes = 0;
    bool is_static = false;
};

struct Allocation {
    std::map<std::string, std::vector<Piece>> placement;
    std::vector<std::uint64_t> bank_used;
    std::uint64_t spill_bytes = 0;

    [[nodiscard]] bool empty() const { return placement.empty(); }
};

namespace detail {

/// First-fit by size: largest buffers first, each into the first bank with
/// room, splitting across banks when none has room for the whole buffer.
inline std::uint64_t place(const std::vector<Bank>& banks, BankRole role, std::vector<std::uint64_t>& used,
                           std::uint64_t bytes, std::vector<Piece>& pieces) {
    for (std::size_t i = 0; i < banks.size(); ++i)
        if (banks[i].role == role && banks[i].capacity - used[i] >= bytes) {
            used[i] += bytes;
            pieces.push_back({i, bytes});
            return 0;
        }
    for (std::size_t i = 0; i < banks.size() && bytes > 0; ++i) {
        if (banks[i].role != role) continue;
        const std::uint64_t take = std::min(bytes, banks[i].capacity - used[i]);
        if (take == 0) continue;
        used[i] += take;
        pieces.push_back({i, take});
        bytes -= take;
    }
    return bytes; // not placed
}

} // namespace detail

/// Static buffers to static banks (error on overflow), transient buffers to
/// transient banks with overflow spilled off-chip.
inline Allocation allocate(std::vector<BufferRequest> reqs, const Inventory& inv) {
    const auto banks = expand(inv);
    Allocation a;
    a.bank_used.assign(banks.size(), 0);
    std::stable_sort(reqs.begin(), reqs.end(), [](const auto& x, const auto& y) { return x.bytes > y.bytes; });
    std::uint64_t static_total = 0;
    for (const auto& r : reqs)
        if (r.is_static) static_total += r.bytes;
    if (static_total > inv.capacity(BankRole::Static))
        throw ConfigError("allocation: static data (" + std::to_string(static_total) + " B) exceeds SRAM capacity (" +
                          std::to_string(inv.capacity(BankRole::Static)) + " B)");
    for (const auto& r : reqs) {
        auto& pieces = a.placement[r.name];
        const auto role = r.is_static ? BankRole::Static : BankRole::Transient;
        const std::uint64_t rest = detail::place(banks, role, a.bank_used, r.bytes, pieces);
        if (rest == 0) continue;
        if (r.is_static) throw ConfigError("allocation: static buffer '" + r.name + "' does not fit");
        pieces.push_back({kDramBank, rest});
        a.spill_bytes += rest;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Schedule-driven simulation

/// A transient value with its storage over time.
struct TimedInterval {
    sched::LiveInterval iv;
    sched::Tick write_time = 0;
    sched::Tick last_read_time = 0;
    std::size_t reads = 0;
    std::vector<Piece> pieces;

    [[nodiscard]] sched::Tick lifetime() const { return last_read_time - write_time; }
};

struct RefreshLedger {
    std::map<std::string, std::uint64_t> per_buffer; // max refreshes any one datum of the buffer needed
    std::uint64_t max_count = 0;
    std::uint64_t total_events = 0; // word refreshes
    double energy = 0.0;
};

struct AccessCounts {
    double sram_words = 0;
    double edram_words = 0;
    double dram_words = 0;

    AccessCounts& operator+=(const AccessCounts& o) {
        sram_words += o.sram_words;
        edram_words += o.edram_words;
        dram_words += o.dram_words;
        return *this;
    }
};

struct MemoryOptions {
    bfp::BfpConfig bfp;
    double retention_us = 3.35;
    bool refresh_enabled = true;
    /// Forces at least this many refreshes on every eDRAM-resident datum (sweeps).
    std::uint64_t forced_refreshes = 0;
    std::uint64_t refresh_cycles_per_word = 2;
    double dram_bytes_per_cycle = 4.0;
    MemoryEnergyConstants energy;
};

struct MemoryReport {
    std::vector<TimedInterval> intervals;
    RefreshLedger ledger;
    AccessCounts accesses;
    std::uint64_t peak_transient_bytes = 0;
    std::uint64_t peak_onchip_bytes = 0;
    std::uint64_t spill_bytes = 0;      // peak off-chip residency
    std::uint64_t dram_traffic_bytes = 0;
    double utilization = 0.0;
    sched::Tick span_ticks = 0;
    std::uint64_t refresh_stall_cycles = 0;
    std::uint64_t dram_stall_cycles = 0;
    sched::Tick max_edram_lifetime = 0;
    std::size_t expired_unrefreshed = 0; // eDRAM data read after retention with refresh disabled
};

inline std::uint64_t words_of(std::uint64_t bytes, const bfp::BfpConfig& cfg) {
    const std::uint64_t bits = static_cast<std::uint64_t>(cfg.encoded_size_bits());
    return (bytes * 8 + bits - 1) / bits;
}

/// Places every transient value of the schedule when it is written (first
/// fit across transient banks, overflow off-chip), frees it after its last
/// read, and accounts refreshes, accesses and utilization.
inline MemoryReport simulate_memory(const sched::Schedule& s, const sched::AccessTrace& tr, const Inventory& inv,
                                    const MemoryOptions& opt) {
    const auto banks = expand(inv);
    const auto ivs = sched::live_intervals(s, opt.bfp);
    MemoryReport r;
    r.span_ticks = tr.end_time;
    const double us_per_tick = tr.seconds_per_tick * 1e6;

    std::vector<TimedInterval> timed;
    std::vector<std::size_t> reads(ivs.size(), 0);
    {
        // count reads per interval
        std::map<std::string, std::size_t> open;
        std::size_t k = 0;
        for (std::size_t i = 0; i < s.code.size(); ++i) {
            for (const auto& in : s.code[i].inputs) ++reads[open.at(in)];
            if (s.code[i].overwrite) open.erase(*s.code[i].overwrite);
            open[s.code[i].output] = k++;
        }
    }
    for (std::size_t k = 0; k < ivs.size(); ++k) {
        const auto& iv = ivs[k];
        TimedInterval t;
        t.iv = iv;
        t.write_time = tr.start[iv.write_instr] + tr.latency[iv.write_instr];
        t.last_read_time = iv.last_read_instr == iv.write_instr ? t.write_time : tr.start[iv.last_read_instr];
        t.reads = reads[k];
        timed.push_back(std::move(t));
    }

    // event sweep: frees before allocations at the same tick
    struct Ev {
        sched::Tick time;
        int type; // 0 free, 1 alloc
        std::size_t idx;
    };
    std::vector<Ev> evs;
    for (std::size_t k = 0; k < timed.size(); ++k) {
        if (timed[k].iv.is_static) continue;
        evs.push_back({timed[k].write_time, 1, k});
        evs.push_back({timed[k].last_read_time, 0, k});
    }
    std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
        return a.time != b.time ? a.time < b.time : a.type < b.type;
    });
    // a value freed at the tick it is written must not be freed before it exists
    std::vector<bool> placed(timed.size(), false), freed_early(timed.size(), false);
    std::vector<std::uint64_t> used(banks.size(), 0);
    std::uint64_t live = 0, onchip = 0, offchip = 0;
    const std::uint64_t cap = inv.capacity(BankRole::Transient);
    double occupied_area = 0.0;
    sched::Tick last_t = 0;
    auto release = [&](std::size_t k) {
        for (const auto& p : timed[k].pieces) {
            if (p.bank == kDramBank)
                offchip -= p.bytes;
            else {
                used[p.bank] -= p.bytes;
                onchip -= p.bytes;
            }
        }
        live -= timed[k].iv.bytes;
    };
    for (const auto& e : evs) {
        occupied_area += static_cast<double>(onchip) * static_cast<double>(e.time - last_t);
        last_t = e.time;
        auto& t = timed[e.idx];
        if (e.type == 0) {
            if (!placed[e.idx]) {
                freed_early[e.idx] = true;
                continue;
            }
            release(e.idx);
            continue;
        }
        const std::uint64_t rest = detail::place(banks, BankRole::Transient, used, t.iv.bytes, t.pieces);
        for (const auto& p : t.pieces) onchip += p.bytes;
        if (rest > 0) {
            t.pieces.push_back({kDramBank, rest});
            offchip += rest;
        }
        live += t.iv.bytes;
        placed[e.idx] = true;
        r.peak_transient_bytes = std::max(r.peak_transient_bytes, live);
        r.peak_onchip_bytes = std::max(r.peak_onchip_bytes, onchip);
        r.spill_bytes = std::max(r.spill_bytes, offchip);
        if (freed_early[e.idx]) release(e.idx);
    }
    r.utilization = (cap > 0 && tr.end_time > 0)
                        ? occupied_area / (static_cast<double>(cap) * static_cast<double>(tr.end_time))
                        : 0.0;

    for (auto& t : timed) {
        std::uint64_t refresh = 0;
        for (const auto& p : t.pieces) {
            const std::uint64_t words = words_of(p.bytes, opt.bfp);
            const double touches = static_cast<double>(words) * static_cast<double>(1 + t.reads);
            BankKind kind = p.bank == kDramBank ? BankKind::DRAM_OFFCHIP : banks[p.bank].kind;
            if (kind == BankKind::SRAM) r.accesses.sram_words += touches;
            if (kind == BankKind::EDRAM) r.accesses.edram_words += touches;
            if (kind == BankKind::DRAM_OFFCHIP) {
                r.accesses.dram_words += touches;
                r.dram_traffic_bytes += p.bytes * (1 + t.reads);
            }
            if (kind != BankKind::EDRAM || t.iv.is_static) continue;
            r.max_edram_lifetime = std::max(r.max_edram_lifetime, t.lifetime());
            const double life_us = static_cast<double>(t.lifetime()) * us_per_tick;
            std::uint64_t n = 0;
            if (opt.refresh_enabled) {
                n = std::max(refreshes_required(life_us, opt.retention_us), opt.forced_refreshes);
            } else if (life_us > opt.retention_us && t.reads > 0) {
                ++r.expired_unrefreshed;
            }
            refresh = std::max(refresh, n);
            r.ledger.total_events += n * words;
        }
        if (!t.iv.is_static) {
            auto& slot = r.ledger.per_buffer[t.iv.buffer];
            slot = std::max(slot, refresh);
            r.ledger.max_count = std::max(r.ledger.max_count, refresh);
        }
    }
    r.ledger.energy = static_cast<double>(r.ledger.total_events) * 2.0 * opt.energy.edram_access;
    const std::size_t edram_banks = std::max<std::size_t>(1, inv.bank_count(BankKind::EDRAM));
    r.refresh_stall_cycles = (r.ledger.total_events * opt.refresh_cycles_per_word + edram_banks - 1) / edram_banks;
    r.dram_stall_cycles =
        static_cast<std::uint64_t>(std::ceil(static_cast<double>(r.dram_traffic_bytes) / opt.dram_bytes_per_cycle));
    r.intervals = std::move(timed);
    return r;
}

/// Accesses plus refreshes (one eDRAM read and one write per word) plus
/// leakage of every on-chip bank over `duration_us`.
struct MemoryEnergy {
    double access = 0.0;
    double refresh = 0.0;
    double leakage = 0.0;
    [[nodiscard]] double total() const { return access + refresh + leakage; }
};

inline MemoryEnergy memory_energy(const AccessCounts& acc, std::uint64_t refresh_words, const Inventory& inv,
                                  const MemoryEnergyConstants& c, double duration_us) {
    c.validate();
    MemoryEnergy e;
    e.access = acc.sram_words * c.sram_access + acc.edram_words * c.edram_access + acc.dram_words * c.dram_access;
    e.refresh = static_cast<double>(refresh_words) * 2.0 * c.edram_access;
    for (const auto& b : inv.banks) e.leakage += static_cast<double>(b.total_bytes()) * c.leakage(b.kind) * duration_us;
    return e;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Allocation& a, const Inventory& inv) {
    const auto banks = expand(inv);
    nlohmann::json j;
    j["spill_bytes"] = a.spill_bytes;
    nlohmann::json used = nlohmann::json::array();
    for (std::size_t i = 0; i < banks.size(); ++i)
        used.push_back({{"bank", i}, {"kind", to_string(banks[i].kind)}, {"role", to_string(banks[i].role)},
                        {"used_bytes", a.bank_used[i]}, {"capacity_bytes", banks[i].capacity}});
    j["banks"] = used;
    nlohmann::json place = nlohmann::json::object();
    for (const auto& [name, pieces] : a.placement) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : pieces)
            arr.push_back({{"bank", p.bank == kDramBank ? nlohmann::json("dram") : nlohmann::json(p.bank)},
                           {"bytes", p.bytes}});
        place[name] = arr;
    }
    j["placement"] = place;
    return j;
}

inline nlohmann::json to_json(const RefreshLedger& l) {
    return {{"per_buffer", l.per_buffer}, {"max_count", l.max_count}, {"total_events", l.total_events},
            {"energy", l.energy}};
}

} // namespace duplexsim::mem
