// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "duplexsim/harness.hpp"

namespace {

using namespace duplexsim;
using namespace duplexsim::harness;

std::string source_path(const std::string& rel) { return std::string(DUPLEXSIM_SOURCE_DIR) + "/" + rel; }

std::string temp_dir(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("duplexsim_test_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// desk-sized workload with fewer blocks so the tests stay quick
WorkloadConfig small_workload(Variant v, std::size_t blocks = 2) {
    WorkloadConfig w;
    w.spec.variant = v;
    w.spec.blocks = blocks;
    w.spec.in_channels = 3;
    w.spec.height = w.spec.width = 16;
    w.spec.backbone_channels = 9;
    w.spec.branch_channels = 9;
    w.batch = 8;
    return w;
}

ExperimentConfig tiny_training_config() {
    ExperimentConfig c;
    c.dataset.train_size = 64;
    c.dataset.val_size = 32;
    c.train.cfg.epochs = 1;
    c.train.pretrain.epochs = 1;
    c.train.pretrain.samples = 32;
    c.workload = small_workload(Variant::DuDNN);
    return c;
}

TEST(Config, RejectsUnknownKeys) {
    EXPECT_THROW(config_from_json(json{{"experiment", "lifetime"}, {"colour", 1}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"hardware", {{"array", {{"rows", 4}, {"depth", 2}}}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"train", {{"faults", {{"rate", 0.1}}}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"workload", {{"chanels", 4}}}}), ConfigError);
}

TEST(Config, RejectsWrongTypesAndValues) {
    EXPECT_THROW(config_from_json(json{{"seed", -1}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"train", {{"use_bfp", 1}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"experiment", "benchmark"}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"hardware", {{"profile", "tpu"}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"compare", {{"variants", {"DuDNN", "RevNet"}}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json::array()), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/duplexsim.json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c;
    c.kind = ExperimentKind::Sweep;
    c.seed = 17;
    c.hardware.retention_us = 4.5;
    c.hardware.mode = systolic::CycleMode::Detailed;
    c.train.cfg.faults.enabled = true;
    c.compare.variants = {Variant::FI, Variant::BO};
    c.sweep.axis = SweepAxis::ZeroFraction;
    c.sweep.values = {0.0, 0.5};
    const json a = to_json(c);
    const json b = to_json(config_from_json(a));
    EXPECT_EQ(a, b);
    EXPECT_EQ(to_json(config_from_json(to_json(ExperimentConfig{}))), to_json(ExperimentConfig{}));
}

TEST(Config, ShippedConfigsLoadAndValidate) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(source_path("configs"))) {
        if (e.path().extension() != ".json") continue;
        SCOPED_TRACE(e.path().string());
        const ExperimentConfig c = load_config(e.path().string());
        EXPECT_NO_THROW(c.validate());
        // the round trip through the full schema preserves every file
        EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
        ++n;
    }
    EXPECT_GE(n, 5u);
}

TEST(Config, ProfileOverridesApplyOnTop) {
    const auto c = config_from_json(json{{"hardware", {{"profile", "sram_only"}, {"array", {{"rows", 8}}}}}});
    EXPECT_EQ(c.hardware.profile, "sram_only");
    EXPECT_EQ(c.hardware.array.rows, 8u);
    EXPECT_EQ(c.hardware.array.cols, 4u);
    EXPECT_EQ(c.hardware.inventory.bank_count(mem::BankKind::EDRAM), 0u);
    EXPECT_THROW(hardware_profile("tpu"), ConfigError);
}

TEST(StepCost, RetentionAtTwoThirdsOfTheLifetimeForcesOneRefresh) {
    const auto d = small_workload(Variant::DuDNN).dims(Variant::DuDNN);
    HardwareConfig hw = hardware_profile("hybrid_edram");
    hw.retention_us = 1e6;
    const StepCost base = step_cost(d, hw);
    EXPECT_EQ(base.report.ledger.max_count, 0u);
    const double life = base.max_lifetime_us();
    ASSERT_GT(life, 0.0);
    hw.retention_us = life / 1.5;
    const StepCost tight = step_cost(d, hw);
    EXPECT_EQ(tight.report.ledger.max_count, 1u);
    EXPECT_GT(tight.report.ledger.total_events, 0u);
    EXPECT_GT(tight.memory.refresh, 0.0);
    EXPECT_GE(tight.seconds, base.seconds);
}

TEST(StepCost, StaticOverflowIsAConfigError) {
    const auto d = small_workload(Variant::DuDNN).dims(Variant::DuDNN);
    HardwareConfig hw = hardware_profile("hybrid_edram");
    for (auto& b : hw.inventory.banks)
        if (b.role == mem::BankRole::Static) b.capacity_bytes = 512;
    EXPECT_THROW(step_cost(d, hw), ConfigError);
}

TEST(StepCost, EnergyAndTimeArePositiveAndConsistent) {
    const auto d = small_workload(Variant::FI).dims(Variant::FI);
    const StepCost c = step_cost(d, hardware_profile("sram_only"));
    EXPECT_GT(c.compute_ticks, 0u);
    EXPECT_GT(c.pe_energy, 0.0);
    EXPECT_DOUBLE_EQ(c.energy, c.pe_energy + c.memory.total());
    EXPECT_EQ(c.report.ledger.total_events, 0u);
    const json j = to_json(c);
    EXPECT_TRUE(j.contains("refresh"));
    EXPECT_EQ(j.at("static_bytes"), c.static_bytes);
}

TEST(TimeToAccuracy, TargetsAtTheExtremes) {
    train::TrainResult tr;
    tr.initial_accuracy = 0.2;
    tr.trajectory = {{1, 10, 1.0, 0.5}, {2, 20, 0.8, 0.7}};
    StepCost cost;
    cost.seconds = 2.0;
    cost.energy = 3.0;
    const auto zero = time_to_accuracy(tr, 0.0, cost);
    EXPECT_TRUE(zero.reached);
    EXPECT_EQ(zero.tta, 0.0);
    const auto mid = time_to_accuracy(tr, 0.6, cost);
    EXPECT_EQ(mid.steps, 20u);
    EXPECT_DOUBLE_EQ(mid.tta, 40.0);
    EXPECT_DOUBLE_EQ(mid.eta, 60.0);
    const auto never = time_to_accuracy(tr, 1.01, cost);
    EXPECT_FALSE(never.reached);
    const json j = to_json(never);
    EXPECT_EQ(j.at("tta_seconds"), "Inf");
    EXPECT_EQ(j.at("eta"), "Inf");
    EXPECT_EQ(j.at("steps"), "Inf");
}

TEST(Compare, NormalizationPutsTheBestCellAtOne) {
    ComparisonReport r;
    auto cell = [](double tta, double eta, bool reached) {
        ComparisonCell c;
        c.result.reached = reached;
        c.result.tta = reached ? tta : std::numeric_limits<double>::infinity();
        c.result.eta = reached ? eta : std::numeric_limits<double>::infinity();
        return c;
    };
    r.cells = {cell(4, 9, true), cell(2, 12, true), cell(0, 0, false)};
    normalize(r);
    EXPECT_DOUBLE_EQ(r.cells[0].tta_norm, 2.0);
    EXPECT_DOUBLE_EQ(r.cells[1].tta_norm, 1.0);
    EXPECT_DOUBLE_EQ(r.cells[0].eta_norm, 1.0);
    EXPECT_DOUBLE_EQ(r.cells[1].eta_norm, 12.0 / 9.0);
    EXPECT_TRUE(std::isinf(r.cells[2].tta_norm));
    // every reached cell reaching at step zero normalizes to one
    r.cells = {cell(0, 0, true), cell(0, 0, true)};
    normalize(r);
    EXPECT_EQ(r.cells[0].tta_norm, 1.0);
    EXPECT_EQ(r.cells[1].eta_norm, 1.0);
}

TEST(Compare, ProducesOneCellPerVariantAndProfile) {
    auto cfg = tiny_training_config();
    cfg.kind = ExperimentKind::Compare;
    cfg.compare.variants = {Variant::DuDNN, Variant::FI};
    cfg.train.target_accuracy = 0.0;
    const auto r = compare(cfg);
    ASSERT_EQ(r.cells.size(), 4u);
    EXPECT_FALSE(r.partial);
    for (const auto& c : r.cells) {
        EXPECT_FALSE(c.failed) << c.error;
        EXPECT_TRUE(c.result.reached);
        EXPECT_EQ(c.tta_norm, 1.0);
        EXPECT_EQ(c.final_accuracy.size(), 1u);
    }
    // training is shared across profiles
    EXPECT_EQ(r.cells[0].final_accuracy, r.cells[1].final_accuracy);
}

TEST(Compare, ReportsAreByteIdenticalOnRerun) {
    auto cfg = tiny_training_config();
    cfg.kind = ExperimentKind::Compare;
    cfg.compare.variants = {Variant::DuDNN, Variant::BO};
    cfg.compare.profiles = {"hybrid_edram"};
    cfg.train.target_accuracy = 0.5;
    EXPECT_EQ(run(cfg).body.dump(), run(cfg).body.dump());
}

TEST(Train, ReportCarriesTrajectoryAndCost) {
    auto cfg = tiny_training_config();
    cfg.kind = ExperimentKind::Train;
    cfg.train.target_accuracy = 1.01;
    const auto rep = run(cfg);
    EXPECT_EQ(rep.body.at("trajectory").size(), 1u);
    EXPECT_EQ(rep.body.at("result").at("tta_seconds"), "Inf");
    EXPECT_EQ(rep.csv_rows.size(), 1u);
}

TEST(Lifetime, ShippedConfigMatchesTheClosedForm) {
    const auto rep = run(load_config(source_path("configs/lifetime_small.json")));
    EXPECT_TRUE(rep.body.at("closed_form_matches").get<bool>());
    EXPECT_FALSE(rep.csv_rows.empty());
    EXPECT_GT(rep.body.at("t_data_us").get<double>(), 0.0);
}

TEST(Lifetime, IrreversibleVariantHasNoClosedForm) {
    ExperimentConfig c;
    c.workload = small_workload(Variant::FI);
    const auto rep = run_lifetime(c);
    EXPECT_FALSE(rep.body.contains("closed_form"));
    EXPECT_TRUE(rep.body.contains("measured"));
}

ExperimentConfig sweep_config(SweepAxis axis, std::vector<double> values, Variant v = Variant::FI) {
    ExperimentConfig c;
    c.kind = ExperimentKind::Sweep;
    c.workload = small_workload(v, 3);
    c.sweep.axis = axis;
    c.sweep.values = std::move(values);
    return c;
}

TEST(Sweep, TemperatureRefreshesNeverDecrease) {
    const auto rep = run_sweep(sweep_config(SweepAxis::Temperature, {-30, 0, 25, 50, 75, 100}));
    const auto& rows = rep.body.at("rows");
    ASSERT_EQ(rows.size(), 6u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_GE(rows[i].at("refresh_max").get<std::uint64_t>(), rows[i - 1].at("refresh_max").get<std::uint64_t>());
        EXPECT_LT(rows[i].at("retention_us").get<double>(), rows[i - 1].at("retention_us").get<double>());
    }
    EXPECT_EQ(rep.csv_rows.size(), 6u);
    EXPECT_EQ(rep.csv_header.front(), "temperature");
}

TEST(Sweep, ZeroFractionLowersPeEnergy) {
    const auto rows = run_sweep(sweep_config(SweepAxis::ZeroFraction, {0.0, 0.3, 0.6, 0.9})).body.at("rows");
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_LT(rows[i].at("pe_energy").get<double>(), rows[i - 1].at("pe_energy").get<double>());
}

TEST(Sweep, ForcedRefreshesRaiseEventsAndEnergy) {
    const auto rows = run_sweep(sweep_config(SweepAxis::RefreshCount, {0, 1, 2, 4})).body.at("rows");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_GT(rows[i].at("refresh_events").get<std::uint64_t>(), rows[i - 1].at("refresh_events").get<std::uint64_t>());
        EXPECT_GT(rows[i].at("step_energy").get<double>(), rows[i - 1].at("step_energy").get<double>());
    }
}

TEST(Sweep, ArraySizeNormalizesToTheFirstValue) {
    const auto rows = run_sweep(sweep_config(SweepAxis::ArraySize, {6, 10, 12}, Variant::DuDNN)).body.at("rows");
    EXPECT_EQ(rows[0].at("normalized_lifetime").get<double>(), 1.0);
    EXPECT_EQ(rows[0].at("mac_ratio").get<double>(), 1.0);
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_LT(rows[i].at("normalized_lifetime").get<double>(), rows[i - 1].at("normalized_lifetime").get<double>());
}

TEST(Sweep, ScaleArrayScalesBankCountsByArea) {
    const auto base = hardware_profile("hybrid_edram");
    const auto h = scale_array(base, 12);
    EXPECT_EQ(h.array.pes(), 144u);
    EXPECT_EQ(h.inventory.bank_count(mem::BankKind::EDRAM), 48u);
    EXPECT_EQ(h.inventory.bank_count(mem::BankKind::SRAM), 24u);
    EXPECT_EQ(scale_array(base, 1).inventory.bank_count(mem::BankKind::SRAM), 1u);
}

TEST(Report, WritesJsonAndCsvWithInf) {
    Report r;
    r.body = {{"x", finite_or_inf(std::numeric_limits<double>::infinity())}, {"y", 1.5}};
    r.csv_header = {"a", "b"};
    r.csv_rows = {{"1", csv_cell(finite_or_inf(std::numeric_limits<double>::infinity()))}};
    const auto dir = temp_dir("report");
    std::filesystem::remove_all(dir);
    write_report(r, dir);
    const auto j = json::parse(slurp(dir + "/report.json"));
    EXPECT_EQ(j.at("x"), "Inf");
    EXPECT_EQ(slurp(dir + "/table.csv"), "a,b\n1,Inf\n");
    std::filesystem::remove_all(dir);
}

} // namespace
