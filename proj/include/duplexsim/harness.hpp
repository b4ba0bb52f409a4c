// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, orchestration and reports.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "duplexsim/duplex.hpp"
#include "duplexsim/error.hpp"
#include "duplexsim/memory.hpp"
#include "duplexsim/schedule.hpp"
#include "duplexsim/systolic.hpp"
#include "duplexsim/train.hpp"

namespace duplexsim::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

enum class ExperimentKind { Lifetime, Train, Compare, Sweep };

inline std::string_view to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::Lifetime: return "lifetime";
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Compare: return "compare";
    case ExperimentKind::Sweep: return "sweep";
    }
    return "?";
}

inline ExperimentKind parse_experiment(std::string_view s) {
    if (s == "lifetime") return ExperimentKind::Lifetime;
    if (s == "train") return ExperimentKind::Train;
    if (s == "compare") return ExperimentKind::Compare;
    if (s == "sweep") return ExperimentKind::Sweep;
    throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

struct HardwareConfig {
    std::string profile = "hybrid_edram";
    systolic::ArrayConfig array;
    mem::Inventory inventory;
    mem::RetentionModel retention_model;
    double temperature_c = 100.0;
    std::optional<double> retention_us; // overrides the temperature curve
    bool refresh_enabled = true;
    std::uint64_t forced_refreshes = 0;
    systolic::CycleMode mode = systolic::CycleMode::Analytical;
    sched::MacConvention macs = sched::MacConvention::Published;
    systolic::EnergyConstants pe_energy;
    mem::MemoryEnergyConstants memory_energy;
    double zero_group_fraction = 0.0;
    double zero_mantissa_fraction = 0.0;
    std::uint64_t refresh_cycles_per_word = 2;
    double dram_bytes_per_cycle = 4.0;

    [[nodiscard]] sched::LatencyModel latency() const { return {mode, macs, array}; }
    [[nodiscard]] double retention() const {
        return retention_us ? *retention_us : mem::retention_at(temperature_c, retention_model);
    }
    void validate(const bfp::BfpConfig& b) const {
        array.validate();
        retention_model.validate();
        inventory.validate(static_cast<std::size_t>(b.encoded_size_bits()));
        if (inventory.capacity(mem::BankRole::Static) == 0) throw ConfigError("hardware: no static bank");
        if (retention_us && !(*retention_us > 0.0)) throw ConfigError("hardware: retention_us must be > 0");
        if (!retention_us) (void)mem::retention_at(temperature_c, retention_model);
        pe_energy.validate();
        memory_energy.validate();
        auto frac = [](double f) { return f >= 0.0 && f <= 1.0; };
        if (!frac(zero_group_fraction) || !frac(zero_mantissa_fraction))
            throw ConfigError("hardware: zero fractions must lie in [0, 1]");
        if (refresh_cycles_per_word < 1) throw ConfigError("hardware: refresh_cycles_per_word must be >= 1");
        if (!(dram_bytes_per_cycle > 0.0)) throw ConfigError("hardware: dram_bytes_per_cycle must be > 0");
    }
};

/// Named hardware profiles. hybrid_edram: 6x6 array, twelve 48 KB eDRAM banks
/// for activations and gradients, six 8 KB SRAM banks for weights.
/// sram_only: 4x4 array, six 48 KB SRAM banks plus two 24 KB SRAM banks.
inline HardwareConfig hardware_profile(std::string_view name) {
    HardwareConfig h;
    h.profile = std::string(name);
    using mem::BankKind, mem::BankRole;
    if (name == "hybrid_edram") {
        h.array.rows = h.array.cols = 6;
        h.inventory.banks = {{BankKind::EDRAM, BankRole::Transient, 12, 48 * 1024, 58, 1024},
                             {BankKind::SRAM, BankRole::Static, 6, 8 * 1024, 58, 1024}};
    } else if (name == "sram_only") {
        h.array.rows = h.array.cols = 4;
        h.inventory.banks = {{BankKind::SRAM, BankRole::Transient, 6, 48 * 1024, 58, 1024},
                             {BankKind::SRAM, BankRole::Static, 2, 24 * 1024, 58, 1024}};
    } else {
        throw ConfigError("unknown hardware profile '" + std::string(name) + "' (expected hybrid_edram|sram_only)");
    }
    return h;
}

/// Layer dimensions the hardware models execute; independent of the desk
/// training net.
struct WorkloadConfig {
    DuDnnSpec spec;
    std::size_t batch = 16;

    WorkloadConfig() {
        spec.blocks = 6;
        spec.in_channels = 16;
        spec.height = spec.width = 16;
        spec.num_classes = 10;
        spec.backbone_channels = 32;
        spec.branch_channels = 32;
        spec.pool_factor = 2;
    }
    [[nodiscard]] sched::NetworkDims dims(Variant v) const { return sched::network_dims(build_variant(spec, v), batch); }
};

struct TrainSection {
    train::TrainConfig cfg;
    train::PretrainConfig pretrain;
    double target_accuracy = 0.9;
    bool save_checkpoint = false;
};

struct CompareSection {
    std::vector<Variant> variants{Variant::DuDNN, Variant::FI, Variant::CA, Variant::BO};
    std::vector<std::string> profiles{"hybrid_edram", "sram_only"};
    std::size_t seeds = 1;
};

enum class SweepAxis { Temperature, ArraySize, ZeroFraction, RefreshCount };

inline std::string_view to_string(SweepAxis a) {
    switch (a) {
    case SweepAxis::Temperature: return "temperature";
    case SweepAxis::ArraySize: return "array_size";
    case SweepAxis::ZeroFraction: return "zero_fraction";
    case SweepAxis::RefreshCount: return "refresh_count";
    }
    return "?";
}

inline SweepAxis parse_sweep_axis(std::string_view s) {
    if (s == "temperature") return SweepAxis::Temperature;
    if (s == "array_size") return SweepAxis::ArraySize;
    if (s == "zero_fraction") return SweepAxis::ZeroFraction;
    if (s == "refresh_count") return SweepAxis::RefreshCount;
    throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

struct SweepSection {
    SweepAxis axis = SweepAxis::Temperature;
    std::vector<double> values{-30.0, 0.0, 25.0, 50.0, 85.0, 100.0};
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Lifetime;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    DuDnnSpec model;
    train::DatasetConfig dataset;
    WorkloadConfig workload;
    HardwareConfig hardware = hardware_profile("hybrid_edram");
    TrainSection train;
    CompareSection compare;
    SweepSection sweep;

    ExperimentConfig() {
        model.in_channels = 2;
        model.height = model.width = 8;
        model.num_classes = 6;
        model.backbone_channels = 8;
        model.branch_channels = 4;
        model.blocks = 2;
    }

    void validate() const {
        model.validate();
        dataset.validate();
        workload.spec.validate();
        if (workload.batch < 1) throw ConfigError("workload: batch must be >= 1");
        hardware.validate(train.cfg.bfp);
        train.cfg.validate();
        if (dataset.channels() > model.in_channels)
            throw ConfigError("model: in_channels is smaller than the dataset's channel count");
        if (dataset.num_classes() != model.num_classes)
            throw ConfigError("model: num_classes must be " + std::to_string(dataset.num_classes()) + " for dataset '" +
                              std::string(train::to_string(dataset.kind)) + "'");
        if (model.height != dataset.height || model.width != dataset.width)
            throw ConfigError("model: input size does not match dataset");
        if (train.pretrain.epochs < 1 || train.pretrain.batch < 1 || train.pretrain.samples < 1 || !(train.pretrain.lr > 0))
            throw ConfigError("train.pretrain: epochs, batch, samples and lr must be positive");
        if (compare.variants.empty() || compare.profiles.empty()) throw ConfigError("compare: variants and profiles must be non-empty");
        if (compare.variants.size() * compare.profiles.size() < 2) throw ConfigError("compare: at least two cells required");
        for (const auto& p : compare.profiles) (void)hardware_profile(p);
        if (compare.seeds < 1) throw ConfigError("compare: seeds must be >= 1");
        if (sweep.values.empty()) throw ConfigError("sweep: values must be non-empty");
        for (double v : sweep.values) {
            if (!std::isfinite(v)) throw ConfigError("sweep: values must be finite");
            if (sweep.axis == SweepAxis::ArraySize && (v < 1 || v != std::floor(v)))
                throw ConfigError("sweep: array sizes must be positive integers");
            if (sweep.axis == SweepAxis::ZeroFraction && (v < 0 || v > 1))
                throw ConfigError("sweep: zero fractions must lie in [0, 1]");
            if (sweep.axis == SweepAxis::RefreshCount && (v < 0 || v != std::floor(v)))
                throw ConfigError("sweep: refresh counts must be non-negative integers");
            if (sweep.axis == SweepAxis::Temperature) (void)mem::retention_at(v, hardware.retention_model);
        }
    }
};

namespace detail {

/// Typed reads from a JSON object; keys that are never asked for are
/// rejected by finish().
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        const std::string where = path_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError(where + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!it->is_number_integer() || (!it->is_number_unsigned() && it->template get<std::int64_t>() < 0))
                throw ConfigError(where + ": expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw ConfigError(where + ": expected an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw ConfigError(where + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw ConfigError(where + ": expected a string");
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    template <class T, class Parse>
    void get_enum(const std::string& key, T& out, Parse parse) {
        std::string s;
        bool present = j_.contains(key);
        get(key, s);
        if (present) out = parse(s);
    }
    const json* sub(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_spec(const json& j, const std::string& path, DuDnnSpec& s, std::size_t* batch = nullptr) {
    ObjectReader r(j, path);
    r.get_enum("variant", s.variant, parse_variant);
    r.get("blocks", s.blocks);
    r.get("in_channels", s.in_channels);
    r.get("height", s.height);
    r.get("width", s.width);
    r.get("num_classes", s.num_classes);
    r.get("backbone_channels", s.backbone_channels);
    r.get("branch_channels", s.branch_channels);
    r.get("kernel", s.kernel);
    r.get("pool_factor", s.pool_factor);
    if (batch) r.get("batch", *batch);
    r.finish();
}

inline json spec_json(const DuDnnSpec& s) {
    return {{"variant", to_string(s.variant)},
            {"blocks", s.blocks},
            {"in_channels", s.in_channels},
            {"height", s.height},
            {"width", s.width},
            {"num_classes", s.num_classes},
            {"backbone_channels", s.backbone_channels},
            {"branch_channels", s.branch_channels},
            {"kernel", s.kernel},
            {"pool_factor", s.pool_factor}};
}

inline void read_hardware(const json& j, HardwareConfig& h) {
    ObjectReader r(j, "hardware");
    // the profile is the base the remaining keys override
    if (j.contains("profile")) {
        std::string p;
        r.get("profile", p);
        if (p != "custom") h = hardware_profile(p);
        h.profile = p;
    }
    if (const json* a = r.sub("array")) {
        ObjectReader ar(*a, "hardware.array");
        ar.get("rows", h.array.rows);
        ar.get("cols", h.array.cols);
        ar.get("clock_hz", h.array.clock_hz);
        ar.get("group_size", h.array.group_size);
        ar.finish();
    }
    if (const json* b = r.sub("banks")) {
        if (!b->is_array()) throw ConfigError("hardware.banks: expected an array");
        h.inventory.banks.clear();
        for (std::size_t i = 0; i < b->size(); ++i) {
            mem::BankConfig bc;
            ObjectReader br((*b)[i], "hardware.banks[" + std::to_string(i) + "]");
            br.get_enum("kind", bc.kind, mem::parse_bank_kind);
            br.get_enum("role", bc.role, mem::parse_bank_role);
            br.get("count", bc.count);
            br.get("capacity_bytes", bc.capacity_bytes);
            br.get("word_bits", bc.word_bits);
            br.get("words_per_array", bc.words_per_array);
            br.finish();
            h.inventory.banks.push_back(bc);
        }
    }
    if (const json* rt = r.sub("retention")) {
        ObjectReader rr(*rt, "hardware.retention");
        rr.get("hot_c", h.retention_model.hot_c);
        rr.get("hot_us", h.retention_model.hot_us);
        rr.get("cold_c", h.retention_model.cold_c);
        rr.get("cold_us", h.retention_model.cold_us);
        rr.finish();
    }
    r.get("temperature_c", h.temperature_c);
    if (j.contains("retention_us") && !j.at("retention_us").is_null()) {
        double v = 0;
        r.get("retention_us", v);
        h.retention_us = v;
    } else {
        (void)r.sub("retention_us");
        h.retention_us.reset();
    }
    r.get("refresh_enabled", h.refresh_enabled);
    r.get("forced_refreshes", h.forced_refreshes);
    r.get_enum("mode", h.mode, systolic::parse_cycle_mode);
    r.get_enum("mac_convention", h.macs, sched::parse_mac_convention);
    if (const json* e = r.sub("pe_energy")) {
        ObjectReader er(*e, "hardware.pe_energy");
        er.get("active", h.pe_energy.active);
        er.get("gated", h.pe_energy.gated);
        er.get("skipped", h.pe_energy.skipped);
        er.get("register_write", h.pe_energy.register_write);
        er.finish();
    }
    if (const json* e = r.sub("memory_energy")) {
        ObjectReader er(*e, "hardware.memory_energy");
        er.get("sram_access", h.memory_energy.sram_access);
        er.get("edram_access", h.memory_energy.edram_access);
        er.get("dram_access", h.memory_energy.dram_access);
        er.get("sram_leakage", h.memory_energy.sram_leakage);
        er.get("edram_leakage_ratio", h.memory_energy.edram_leakage_ratio);
        er.finish();
    }
    r.get("zero_group_fraction", h.zero_group_fraction);
    r.get("zero_mantissa_fraction", h.zero_mantissa_fraction);
    r.get("refresh_cycles_per_word", h.refresh_cycles_per_word);
    r.get("dram_bytes_per_cycle", h.dram_bytes_per_cycle);
    r.finish();
}

inline json hardware_json(const HardwareConfig& h) {
    json banks = json::array();
    for (const auto& b : h.inventory.banks)
        banks.push_back({{"kind", mem::to_string(b.kind)},
                         {"role", mem::to_string(b.role)},
                         {"count", b.count},
                         {"capacity_bytes", b.capacity_bytes},
                         {"word_bits", b.word_bits},
                         {"words_per_array", b.words_per_array}});
    return {{"profile", h.profile},
            {"array",
             {{"rows", h.array.rows}, {"cols", h.array.cols}, {"clock_hz", h.array.clock_hz}, {"group_size", h.array.group_size}}},
            {"banks", banks},
            {"retention",
             {{"hot_c", h.retention_model.hot_c},
              {"hot_us", h.retention_model.hot_us},
              {"cold_c", h.retention_model.cold_c},
              {"cold_us", h.retention_model.cold_us}}},
            {"temperature_c", h.temperature_c},
            {"retention_us", h.retention_us ? json(*h.retention_us) : json(nullptr)},
            {"refresh_enabled", h.refresh_enabled},
            {"forced_refreshes", h.forced_refreshes},
            {"mode", systolic::to_string(h.mode)},
            {"mac_convention", sched::to_string(h.macs)},
            {"pe_energy",
             {{"active", h.pe_energy.active},
              {"gated", h.pe_energy.gated},
              {"skipped", h.pe_energy.skipped},
              {"register_write", h.pe_energy.register_write}}},
            {"memory_energy",
             {{"sram_access", h.memory_energy.sram_access},
              {"edram_access", h.memory_energy.edram_access},
              {"dram_access", h.memory_energy.dram_access},
              {"sram_leakage", h.memory_energy.sram_leakage},
              {"edram_leakage_ratio", h.memory_energy.edram_leakage_ratio}}},
            {"zero_group_fraction", h.zero_group_fraction},
            {"zero_mantissa_fraction", h.zero_mantissa_fraction},
            {"refresh_cycles_per_word", h.refresh_cycles_per_word},
            {"dram_bytes_per_cycle", h.dram_bytes_per_cycle}};
}

inline void read_bfp(const json& j, const std::string& path, bfp::BfpConfig& b) {
    ObjectReader r(j, path);
    r.get("exp_bits", b.exp_bits);
    r.get("man_bits", b.man_bits);
    r.get("group_size", b.group_size);
    r.get("exp_bias", b.exp_bias);
    r.finish();
}

} // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    detail::ObjectReader r(j, "config");
    r.get_enum("experiment", c.kind, parse_experiment);
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    if (const json* m = r.sub("model")) detail::read_spec(*m, "model", c.model);
    if (const json* d = r.sub("dataset")) {
        detail::ObjectReader dr(*d, "dataset");
        dr.get_enum("kind", c.dataset.kind, train::parse_dataset_kind);
        dr.get("train_size", c.dataset.train_size);
        dr.get("val_size", c.dataset.val_size);
        dr.get("height", c.dataset.height);
        dr.get("width", c.dataset.width);
        dr.get("noise", c.dataset.noise);
        dr.get("texture_amplitude", c.dataset.texture_amplitude);
        dr.get("tone_amplitude", c.dataset.tone_amplitude);
        dr.finish();
    }
    if (const json* w = r.sub("workload")) detail::read_spec(*w, "workload", c.workload.spec, &c.workload.batch);
    if (const json* h = r.sub("hardware")) detail::read_hardware(*h, c.hardware);
    if (const json* t = r.sub("train")) {
        detail::ObjectReader tr(*t, "train");
        auto& tc = c.train.cfg;
        tr.get("lr", tc.lr);
        tr.get("batch", tc.batch);
        tr.get("epochs", tc.epochs);
        tr.get("momentum", tc.momentum);
        tr.get("weight_decay", tc.weight_decay);
        tr.get("use_bfp", tc.use_bfp);
        if (const json* b = tr.sub("bfp")) detail::read_bfp(*b, "train.bfp", tc.bfp);
        if (const json* f = tr.sub("faults")) {
            detail::ObjectReader fr(*f, "train.faults");
            fr.get("enabled", tc.faults.enabled);
            fr.get("yield", tc.faults.yield);
            fr.get("expired", tc.faults.expired);
            fr.get("seed", tc.faults.seed);
            fr.finish();
        }
        if (const json* p = tr.sub("pretrain")) {
            detail::ObjectReader pr(*p, "train.pretrain");
            pr.get("epochs", c.train.pretrain.epochs);
            pr.get("batch", c.train.pretrain.batch);
            pr.get("lr", c.train.pretrain.lr);
            pr.get("samples", c.train.pretrain.samples);
            pr.finish();
        }
        tr.get("target_accuracy", c.train.target_accuracy);
        tr.get("save_checkpoint", c.train.save_checkpoint);
        tr.finish();
    }
    if (const json* cp = r.sub("compare")) {
        detail::ObjectReader cr(*cp, "compare");
        if (const json* v = cr.sub("variants")) {
            if (!v->is_array()) throw ConfigError("compare.variants: expected an array");
            c.compare.variants.clear();
            for (const auto& e : *v) {
                if (!e.is_string()) throw ConfigError("compare.variants: expected strings");
                c.compare.variants.push_back(parse_variant(e.get<std::string>()));
            }
        }
        if (const json* p = cr.sub("profiles")) {
            if (!p->is_array()) throw ConfigError("compare.profiles: expected an array");
            c.compare.profiles.clear();
            for (const auto& e : *p) {
                if (!e.is_string()) throw ConfigError("compare.profiles: expected strings");
                c.compare.profiles.push_back(e.get<std::string>());
            }
        }
        cr.get("seeds", c.compare.seeds);
        cr.finish();
    }
    if (const json* s = r.sub("sweep")) {
        detail::ObjectReader sr(*s, "sweep");
        sr.get_enum("axis", c.sweep.axis, parse_sweep_axis);
        if (const json* v = sr.sub("values")) {
            if (!v->is_array()) throw ConfigError("sweep.values: expected an array");
            c.sweep.values.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) throw ConfigError("sweep.values: expected numbers");
                c.sweep.values.push_back(e.get<double>());
            }
        }
        sr.finish();
    }
    r.finish();
    c.validate();
    return c;
}

inline json to_json(const ExperimentConfig& c) {
    const auto& tc = c.train.cfg;
    json variants = json::array();
    for (auto v : c.compare.variants) variants.push_back(to_string(v));
    json workload = detail::spec_json(c.workload.spec);
    workload["batch"] = c.workload.batch;
    return {{"experiment", to_string(c.kind)},
            {"seed", c.seed},
            {"output_dir", c.output_dir},
            {"model", detail::spec_json(c.model)},
            {"dataset",
             {{"kind", train::to_string(c.dataset.kind)},
              {"train_size", c.dataset.train_size},
              {"val_size", c.dataset.val_size},
              {"height", c.dataset.height},
              {"width", c.dataset.width},
              {"noise", c.dataset.noise},
              {"texture_amplitude", c.dataset.texture_amplitude},
              {"tone_amplitude", c.dataset.tone_amplitude}}},
            {"workload", workload},
            {"hardware", detail::hardware_json(c.hardware)},
            {"train",
             {{"lr", tc.lr},
              {"batch", tc.batch},
              {"epochs", tc.epochs},
              {"momentum", tc.momentum},
              {"weight_decay", tc.weight_decay},
              {"use_bfp", tc.use_bfp},
              {"bfp",
               {{"exp_bits", tc.bfp.exp_bits},
                {"man_bits", tc.bfp.man_bits},
                {"group_size", tc.bfp.group_size},
                {"exp_bias", tc.bfp.exp_bias}}},
              {"faults",
               {{"enabled", tc.faults.enabled},
                {"yield", tc.faults.yield},
                {"expired", tc.faults.expired},
                {"seed", tc.faults.seed}}},
              {"pretrain",
               {{"epochs", c.train.pretrain.epochs},
                {"batch", c.train.pretrain.batch},
                {"lr", c.train.pretrain.lr},
                {"samples", c.train.pretrain.samples}}},
              {"target_accuracy", c.train.target_accuracy},
              {"save_checkpoint", c.train.save_checkpoint}}},
            {"compare", {{"variants", variants}, {"profiles", c.compare.profiles}, {"seeds", c.compare.seeds}}},
            {"sweep", {{"axis", to_string(c.sweep.axis)}, {"values", c.sweep.values}}}};
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Per-iteration hardware cost

namespace detail {

/// Systolic job of a convolution instruction, if it is one.
inline std::optional<systolic::MatmulJob> instruction_job(const sched::Instruction& ins, const sched::NetworkDims& d,
                                                          const HardwareConfig& hw) {
    using sched::Opcode;
    enum { Fwd, InGrad, WGrad } kind{};
    char role = 0;
    switch (ins.op) {
    case Opcode::CONV_G: role = 'g', kind = Fwd; break;
    case Opcode::CONV_F1:
    case Opcode::RECOMPUTE_F1: role = '1', kind = Fwd; break;
    case Opcode::CONV_F2:
    case Opcode::RECOMPUTE_F2: role = '2', kind = Fwd; break;
    case Opcode::INVGRAD_U1A: role = '1', kind = InGrad; break;
    case Opcode::INVGRAD_U2A: role = '2', kind = InGrad; break;
    case Opcode::WGRAD_U1W: role = '1', kind = WGrad; break;
    case Opcode::WGRAD_U2W: role = '2', kind = WGrad; break;
    default: return std::nullopt;
    }
    const auto& b = d.blocks.at(sched::block_of(ins.output) - 1);
    const sched::ConvLayerDims& c = role == 'g' ? b.g : role == '1' ? b.f1 : b.f2;
    const systolic::ConvDims cd{d.batch, c.in_channels, c.out_channels, c.height, c.width, c.kernel};
    systolic::MatmulJob job = kind == Fwd      ? systolic::conv_forward_job(cd, hw.array.group_size)
                              : kind == InGrad ? systolic::conv_input_grad_job(cd, hw.array.group_size)
                                               : systolic::conv_weight_grad_job(cd, hw.array.group_size);
    job.zero_group_fraction = hw.zero_group_fraction;
    job.zero_mantissa_fraction = hw.zero_mantissa_fraction;
    return job;
}

} // namespace detail

struct StepCost {
    sched::Tick compute_ticks = 0;
    double compute_seconds = 0.0;
    std::uint64_t refresh_stall_cycles = 0;
    std::uint64_t dram_stall_cycles = 0;
    double seconds = 0.0;
    double pe_energy = 0.0;
    mem::MemoryEnergy memory;
    double energy = 0.0;
    double retention_us = 0.0;
    std::uint64_t static_bytes = 0;
    mem::MemoryReport report;

    [[nodiscard]] double max_lifetime_us() const {
        return static_cast<double>(report.max_edram_lifetime) * compute_seconds /
               std::max<double>(1.0, static_cast<double>(compute_ticks)) * 1e6;
    }
};

/// One training iteration (forward, loss gradient, backward) of `d` on `hw`.
/// Weights and static buffers must fit the static banks.
inline StepCost step_cost(const sched::NetworkDims& d, const HardwareConfig& hw, const bfp::BfpConfig& bcfg = {}) {
    const sched::Schedule s = sched::emit_iteration_schedule(d);
    const sched::LatencyModel lm = hw.latency();
    const sched::AccessTrace tr = sched::simulate_trace(s, d, lm);

    StepCost c;
    std::vector<mem::BufferRequest> statics{{"weights", sched::weight_bytes(d, bcfg), true}};
    std::set<std::string> seen;
    for (const auto& iv : sched::live_intervals(s, bcfg))
        if (iv.is_static && seen.insert(iv.buffer).second) statics.push_back({iv.buffer, iv.bytes, true});
    for (const auto& r : statics) c.static_bytes += r.bytes;
    (void)mem::allocate(statics, hw.inventory); // throws when the static banks overflow

    mem::MemoryOptions mo;
    mo.bfp = bcfg;
    mo.retention_us = hw.retention();
    mo.refresh_enabled = hw.refresh_enabled;
    mo.forced_refreshes = hw.forced_refreshes;
    mo.refresh_cycles_per_word = hw.refresh_cycles_per_word;
    mo.dram_bytes_per_cycle = hw.dram_bytes_per_cycle;
    mo.energy = hw.memory_energy;
    c.retention_us = mo.retention_us;
    c.report = mem::simulate_memory(s, tr, hw.inventory, mo);

    c.compute_ticks = tr.end_time;
    c.compute_seconds = static_cast<double>(tr.end_time) * tr.seconds_per_tick;
    c.refresh_stall_cycles = c.report.refresh_stall_cycles;
    c.dram_stall_cycles = c.report.dram_stall_cycles;
    c.seconds = c.compute_seconds +
                static_cast<double>(c.refresh_stall_cycles + c.dram_stall_cycles) / hw.array.clock_hz;
    for (const auto& ins : s.code)
        if (auto job = detail::instruction_job(ins, d, hw))
            c.pe_energy += systolic::job_energy(systolic::expected_stats(*job, hw.array.group_size), hw.pe_energy);
    c.memory = mem::memory_energy(c.report.accesses, c.report.ledger.total_events, hw.inventory, hw.memory_energy, c.seconds * 1e6);
    c.energy = c.pe_energy + c.memory.total();
    return c;
}

inline json to_json(const StepCost& c) {
    const auto& r = c.report;
    return {{"compute_ticks", c.compute_ticks},
            {"compute_seconds", c.compute_seconds},
            {"refresh_stall_cycles", c.refresh_stall_cycles},
            {"dram_stall_cycles", c.dram_stall_cycles},
            {"seconds", c.seconds},
            {"pe_energy", c.pe_energy},
            {"memory_energy", {{"access", c.memory.access}, {"refresh", c.memory.refresh}, {"leakage", c.memory.leakage}}},
            {"energy", c.energy},
            {"retention_us", c.retention_us},
            {"static_bytes", c.static_bytes},
            {"peak_transient_bytes", r.peak_transient_bytes},
            {"peak_onchip_bytes", r.peak_onchip_bytes},
            {"spill_bytes", r.spill_bytes},
            {"dram_traffic_bytes", r.dram_traffic_bytes},
            {"utilization", r.utilization},
            {"max_edram_lifetime_us", c.max_lifetime_us()},
            {"expired_unrefreshed", r.expired_unrefreshed},
            {"refresh", mem::to_json(r.ledger)}};
}

// ---------------------------------------------------------------------------
// Reports

/// Non-finite numbers are written as the string "Inf".
inline json finite_or_inf(double v) { return std::isfinite(v) ? json(v) : json("Inf"); }

struct Report {
    json body;
    std::vector<std::string> csv_header;
    std::vector<std::vector<std::string>> csv_rows;
};

inline std::string csv_cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

inline std::string to_csv(const Report& r) {
    std::ostringstream os;
    for (std::size_t i = 0; i < r.csv_header.size(); ++i) os << (i ? "," : "") << r.csv_header[i];
    os << '\n';
    for (const auto& row : r.csv_rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << '\n';
    }
    return os.str();
}

/// Writes report.json (and table.csv when the report has rows) under `dir`.
inline void write_report(const Report& r, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw RunError("cannot create output directory '" + dir + "': " + ec.message());
    {
        std::ofstream os(std::filesystem::path(dir) / "report.json");
        if (!os) throw RunError("cannot write report.json in '" + dir + "'");
        os << r.body.dump(2) << '\n';
    }
    if (!r.csv_header.empty()) {
        std::ofstream os(std::filesystem::path(dir) / "table.csv");
        if (!os) throw RunError("cannot write table.csv in '" + dir + "'");
        os << to_csv(r);
    }
}

// ---------------------------------------------------------------------------
// Lifetime analysis

inline Report run_lifetime(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& hw = cfg.hardware;
    const Variant v = cfg.workload.spec.variant;
    const sched::NetworkDims d = cfg.workload.dims(v);
    const sched::LatencyModel lm = hw.latency();
    const double retention = hw.retention();

    const sched::LifetimeReport measured = sched::measured_report(d, lm);
    Report rep;
    json& b = rep.body;
    b["experiment"] = "lifetime";
    b["variant"] = to_string(v);
    b["mode"] = systolic::to_string(hw.mode);
    b["seconds_per_tick"] = lm.seconds_per_tick();
    b["retention_us"] = retention;
    b["measured"] = sched::to_json(measured);
    b["t_f_us"] = measured.us(measured.t_f);
    b["t_b_us"] = measured.us(measured.t_b);
    b["t_data_us"] = measured.us(measured.t_data);
    b["refreshes_forward"] = mem::refreshes_required(measured.us(measured.t_f), retention);
    b["refreshes_backward"] = mem::refreshes_required(measured.us(measured.t_b), retention);
    if (is_reversible(v)) {
        const sched::LifetimeReport closed = sched::closed_form_lifetimes(d, lm);
        b["closed_form"] = sched::to_json(closed);
        b["closed_form_matches"] = closed.forward == measured.forward && closed.backward == measured.backward &&
                                   closed.t_data == measured.t_data;
        b["printed_formulas"] = sched::to_json(sched::printed_lifetimes(d, lm));
    }
    const StepCost sc = step_cost(d, hw, cfg.train.cfg.bfp);
    b["iteration"] = to_json(sc);

    rep.csv_header = {"pass", "buffer", "lifetime_ticks", "lifetime_us", "refreshes"};
    auto rows = [&](const char* pass, const std::map<std::string, sched::Tick>& m) {
        for (const auto& [name, t] : m)
            rep.csv_rows.push_back({pass, name, std::to_string(t), json(measured.us(t)).dump(),
                                    std::to_string(mem::refreshes_required(measured.us(t), retention))});
    };
    rows("forward", measured.forward);
    rows("backward", measured.backward);
    return rep;
}

// ---------------------------------------------------------------------------
// Training with time and energy to accuracy

struct TtaEtaResult {
    double target = 0.0;
    bool reached = false;
    std::uint64_t steps = 0; // optimizer steps until the target was first met
    double tta = std::numeric_limits<double>::infinity();
    double eta = std::numeric_limits<double>::infinity();
};

inline json to_json(const TtaEtaResult& r) {
    return {{"target_accuracy", r.target},
            {"reached", r.reached},
            {"steps", r.reached ? json(r.steps) : json("Inf")},
            {"tta_seconds", finite_or_inf(r.tta)},
            {"eta", finite_or_inf(r.eta)}};
}

/// Steps until the validation accuracy first meets `target` (checked before
/// training and after every epoch), priced at `cost` per step.
inline TtaEtaResult time_to_accuracy(const train::TrainResult& tr, double target, const StepCost& cost) {
    TtaEtaResult r;
    r.target = target;
    std::optional<std::uint64_t> steps;
    if (tr.initial_accuracy >= target)
        steps = 0;
    else
        for (const auto& e : tr.trajectory)
            if (e.val_accuracy >= target) {
                steps = e.steps;
                break;
            }
    if (steps) {
        r.reached = true;
        r.steps = *steps;
        r.tta = static_cast<double>(*steps) * cost.seconds;
        r.eta = static_cast<double>(*steps) * cost.energy;
    }
    return r;
}

struct TrainOutcome {
    train::TrainResult result;
    TtaEtaResult tta;
    StepCost cost;
};

inline json trajectory_json(const train::TrainResult& r) {
    json traj = json::array();
    for (const auto& e : r.trajectory)
        traj.push_back({{"epoch", e.epoch},
                        {"steps", e.steps},
                        {"train_loss", finite_or_inf(e.train_loss)},
                        {"val_accuracy", e.val_accuracy}});
    return traj;
}

namespace detail {

struct SeedData {
    train::Split data;
    std::vector<ResidualFuncParams> backbone;
};

inline SeedData prepare(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedData sd{train::make_dataset(cfg.dataset, seed), {}};
    if (sd.data.train.x.shape().c != cfg.model.in_channels)
        throw ConfigError("model: in_channels must equal the dataset's channel count");
    DuDnnSpec base = cfg.model;
    base.variant = Variant::DuDNN;
    sd.backbone = train::pretrain_backbone(base, cfg.dataset, cfg.train.pretrain, seed);
    return sd;
}

inline train::TrainResult train_variant(const ExperimentConfig& cfg, Variant v, const SeedData& sd, std::uint64_t seed) {
    const DuDnnSpec spec = build_variant(cfg.model, v);
    DuDnnModel m = train::build_model(spec, sd.backbone, seed + 1);
    train::TrainConfig tc = cfg.train.cfg;
    tc.seed = seed;
    return train::train(std::move(m), tc, sd.data);
}

} // namespace detail

inline TrainOutcome train_with_cost(const ExperimentConfig& cfg, Variant v, std::uint64_t seed) {
    const auto sd = detail::prepare(cfg, seed);
    TrainOutcome o;
    o.result = detail::train_variant(cfg, v, sd, seed);
    o.cost = step_cost(cfg.workload.dims(v), cfg.hardware, cfg.train.cfg.bfp);
    o.tta = time_to_accuracy(o.result, cfg.train.target_accuracy, o.cost);
    return o;
}

inline Report run_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const Variant v = cfg.model.variant;
    const TrainOutcome o = train_with_cost(cfg, v, cfg.seed);
    if (cfg.train.save_checkpoint) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.output_dir, ec);
        train::save_checkpoint(o.result.model, (std::filesystem::path(cfg.output_dir) / "checkpoint.bin").string());
    }
    Report rep;
    json& b = rep.body;
    b["experiment"] = "train";
    b["variant"] = to_string(v);
    b["seed"] = cfg.seed;
    b["initial_accuracy"] = o.result.initial_accuracy;
    b["trajectory"] = trajectory_json(o.result);
    b["final_accuracy"] = o.result.final_accuracy();
    b["steps"] = o.result.steps;
    b["diverged"] = o.result.diverged;
    b["corrupted_values"] = o.result.corrupted_values;
    b["step_cost"] = to_json(o.cost);
    b["result"] = to_json(o.tta);
    rep.csv_header = {"epoch", "steps", "train_loss", "val_accuracy"};
    for (const auto& e : o.result.trajectory)
        rep.csv_rows.push_back({std::to_string(e.epoch), std::to_string(e.steps), csv_cell(finite_or_inf(e.train_loss)),
                                json(e.val_accuracy).dump()});
    return rep;
}

// ---------------------------------------------------------------------------
// Variant x hardware comparison

struct ComparisonCell {
    Variant variant = Variant::DuDNN;
    std::string profile;
    std::vector<double> final_accuracy; // per seed
    TtaEtaResult result;                // mean over seeds when every seed reaches the target
    StepCost cost;
    double tta_norm = std::numeric_limits<double>::infinity();
    double eta_norm = std::numeric_limits<double>::infinity();
    bool failed = false;
    std::string error;
};

struct ComparisonReport {
    std::vector<ComparisonCell> cells;
    double best_tta = std::numeric_limits<double>::infinity();
    double best_eta = std::numeric_limits<double>::infinity();
    bool partial = false;
};

/// Normalizes TTA and ETA by the smallest finite value of each.
inline void normalize(ComparisonReport& r) {
    r.best_tta = r.best_eta = std::numeric_limits<double>::infinity();
    for (const auto& c : r.cells) {
        if (c.failed || !c.result.reached) continue;
        r.best_tta = std::min(r.best_tta, c.result.tta);
        r.best_eta = std::min(r.best_eta, c.result.eta);
    }
    const auto inf = std::numeric_limits<double>::infinity();
    for (auto& c : r.cells) {
        if (c.failed || !c.result.reached || !std::isfinite(r.best_tta)) {
            c.tta_norm = c.eta_norm = inf;
            continue;
        }
        c.tta_norm = r.best_tta > 0 ? c.result.tta / r.best_tta : (c.result.tta == 0 ? 1.0 : inf);
        c.eta_norm = r.best_eta > 0 ? c.result.eta / r.best_eta : (c.result.eta == 0 ? 1.0 : inf);
    }
}

inline ComparisonReport compare(const ExperimentConfig& cfg) {
    cfg.validate();
    ComparisonReport rep;
    // training does not depend on the hardware profile: one run per (variant, seed)
    std::map<Variant, std::vector<train::TrainResult>> runs;
    std::map<Variant, std::string> train_error;
    for (std::size_t s = 0; s < cfg.compare.seeds; ++s) {
        const std::uint64_t seed = cfg.seed + s;
        const auto sd = detail::prepare(cfg, seed);
        for (auto v : cfg.compare.variants) {
            if (train_error.count(v)) continue;
            try {
                runs[v].push_back(detail::train_variant(cfg, v, sd, seed));
            } catch (const Error& e) {
                train_error[v] = e.what();
            }
        }
    }
    for (auto v : cfg.compare.variants)
        for (const auto& p : cfg.compare.profiles) {
            ComparisonCell cell;
            cell.variant = v;
            cell.profile = p;
            try {
                if (train_error.count(v)) throw RunError(train_error[v]);
                HardwareConfig hw = hardware_profile(p);
                const HardwareConfig& base = cfg.hardware;
                hw.retention_model = base.retention_model;
                hw.temperature_c = base.temperature_c;
                hw.retention_us = base.retention_us;
                hw.refresh_enabled = base.refresh_enabled;
                hw.forced_refreshes = base.forced_refreshes;
                hw.mode = base.mode;
                hw.macs = base.macs;
                hw.pe_energy = base.pe_energy;
                hw.memory_energy = base.memory_energy;
                hw.zero_group_fraction = base.zero_group_fraction;
                hw.zero_mantissa_fraction = base.zero_mantissa_fraction;
                hw.refresh_cycles_per_word = base.refresh_cycles_per_word;
                hw.dram_bytes_per_cycle = base.dram_bytes_per_cycle;
                hw.array.clock_hz = base.array.clock_hz;
                hw.validate(cfg.train.cfg.bfp);
                cell.cost = step_cost(cfg.workload.dims(v), hw, cfg.train.cfg.bfp);
                double tta = 0, eta = 0;
                bool reached = true;
                std::uint64_t steps = 0;
                for (const auto& r : runs.at(v)) {
                    cell.final_accuracy.push_back(r.final_accuracy());
                    const TtaEtaResult t = time_to_accuracy(r, cfg.train.target_accuracy, cell.cost);
                    reached = reached && t.reached;
                    tta += t.tta;
                    eta += t.eta;
                    steps += t.steps;
                }
                const double n = static_cast<double>(runs.at(v).size());
                cell.result.target = cfg.train.target_accuracy;
                cell.result.reached = reached;
                if (reached) {
                    cell.result.tta = tta / n;
                    cell.result.eta = eta / n;
                    cell.result.steps = steps / runs.at(v).size();
                }
            } catch (const Error& e) {
                cell.failed = true;
                cell.error = e.what();
                rep.partial = true;
            }
            rep.cells.push_back(std::move(cell));
        }
    normalize(rep);
    return rep;
}

inline Report run_compare(const ExperimentConfig& cfg) {
    const ComparisonReport cr = compare(cfg);
    Report rep;
    json cells = json::array();
    rep.csv_header = {"variant", "profile", "reached", "tta_seconds", "eta", "tta_norm", "eta_norm", "refresh_max",
                      "refresh_events", "utilization", "peak_transient_bytes", "spill_bytes", "mean_final_accuracy"};
    for (const auto& c : cr.cells) {
        double mean_acc = 0;
        for (double a : c.final_accuracy) mean_acc += a;
        if (!c.final_accuracy.empty()) mean_acc /= static_cast<double>(c.final_accuracy.size());
        json j = {{"variant", to_string(c.variant)},
                  {"profile", c.profile},
                  {"failed", c.failed},
                  {"final_accuracy", c.final_accuracy},
                  {"mean_final_accuracy", mean_acc},
                  {"result", to_json(c.result)},
                  {"tta_norm", finite_or_inf(c.tta_norm)},
                  {"eta_norm", finite_or_inf(c.eta_norm)}};
        if (c.failed)
            j["error"] = c.error;
        else
            j["step_cost"] = to_json(c.cost);
        cells.push_back(j);
        const auto& r = c.cost.report;
        rep.csv_rows.push_back({std::string(to_string(c.variant)), c.profile, c.result.reached ? "true" : "false",
                                csv_cell(finite_or_inf(c.result.tta)), csv_cell(finite_or_inf(c.result.eta)),
                                csv_cell(finite_or_inf(c.tta_norm)), csv_cell(finite_or_inf(c.eta_norm)),
                                std::to_string(r.ledger.max_count), std::to_string(r.ledger.total_events),
                                json(r.utilization).dump(), std::to_string(r.peak_transient_bytes),
                                std::to_string(r.spill_bytes), json(mean_acc).dump()});
    }
    rep.body = {{"experiment", "compare"},
                {"seed", cfg.seed},
                {"seeds", cfg.compare.seeds},
                {"target_accuracy", cfg.train.target_accuracy},
                {"partial", cr.partial},
                {"best_tta_seconds", finite_or_inf(cr.best_tta)},
                {"best_eta", finite_or_inf(cr.best_eta)},
                {"cells", cells}};
    return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Square array of side `n`; every bank group scaled by the area ratio (rounded up).
inline HardwareConfig scale_array(const HardwareConfig& base, std::size_t n) {
    HardwareConfig h = base;
    const double ratio = static_cast<double>(n * n) / static_cast<double>(base.array.pes());
    h.array.rows = h.array.cols = n;
    for (auto& b : h.inventory.banks)
        b.count = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(static_cast<double>(b.count) * ratio - 1e-9)));
    return h;
}

inline Report run_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const Variant v = cfg.workload.spec.variant;
    const sched::NetworkDims d = cfg.workload.dims(v);
    const auto& bcfg = cfg.train.cfg.bfp;
    Report rep;
    json rows = json::array();
    const std::string axis(to_string(cfg.sweep.axis));
    rep.csv_header = {axis};
    std::optional<double> first_lifetime;
    const std::size_t base_pes = cfg.hardware.array.pes();
    for (double x : cfg.sweep.values) {
        HardwareConfig hw = cfg.hardware;
        json row = {{axis, x}};
        switch (cfg.sweep.axis) {
        case SweepAxis::Temperature: {
            hw.temperature_c = x;
            hw.retention_us.reset();
            const StepCost c = step_cost(d, hw, bcfg);
            row["retention_us"] = c.retention_us;
            row["refresh_max"] = c.report.ledger.max_count;
            row["refresh_events"] = c.report.ledger.total_events;
            row["step_seconds"] = c.seconds;
            row["step_energy"] = c.energy;
            break;
        }
        case SweepAxis::ArraySize: {
            hw = scale_array(cfg.hardware, static_cast<std::size_t>(x));
            const sched::LifetimeReport lr = sched::measured_report(d, hw.latency());
            const double t_us = lr.us(lr.t_data);
            if (!first_lifetime) first_lifetime = t_us;
            row["pes"] = hw.array.pes();
            row["t_data_us"] = t_us;
            row["normalized_lifetime"] = t_us / *first_lifetime;
            row["mac_ratio"] = static_cast<double>(base_pes) / static_cast<double>(hw.array.pes());
            row["edram_banks"] = hw.inventory.bank_count(mem::BankKind::EDRAM);
            row["sram_banks"] = hw.inventory.bank_count(mem::BankKind::SRAM);
            break;
        }
        case SweepAxis::ZeroFraction: {
            hw.zero_group_fraction = x;
            const StepCost c = step_cost(d, hw, bcfg);
            row["pe_energy"] = c.pe_energy;
            row["step_energy"] = c.energy;
            break;
        }
        case SweepAxis::RefreshCount: {
            hw.forced_refreshes = static_cast<std::uint64_t>(x);
            const StepCost c = step_cost(d, hw, bcfg);
            row["refresh_events"] = c.report.ledger.total_events;
            row["step_seconds"] = c.seconds;
            row["step_energy"] = c.energy;
            break;
        }
        }
        rows.push_back(row);
    }
    if (!rows.empty())
        for (const auto& [k, val] : rows[0].items())
            if (k != axis) rep.csv_header.push_back(k);
    for (const auto& row : rows) {
        std::vector<std::string> cells;
        for (const auto& h : rep.csv_header) cells.push_back(csv_cell(row.at(h)));
        rep.csv_rows.push_back(std::move(cells));
    }
    rep.body = {{"experiment", "sweep"}, {"axis", axis}, {"variant", to_string(v)}, {"rows", rows}};
    return rep;
}

inline Report run(const ExperimentConfig& cfg) {
    switch (cfg.kind) {
    case ExperimentKind::Lifetime: return run_lifetime(cfg);
    case ExperimentKind::Train: return run_train(cfg);
    case ExperimentKind::Compare: return run_compare(cfg);
    case ExperimentKind::Sweep: return run_sweep(cfg);
    }
    throw ConfigError("unhandled experiment kind");
}

} // namespace duplexsim::harness
