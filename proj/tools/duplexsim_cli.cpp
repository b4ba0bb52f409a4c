// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "duplexsim/harness.hpp"

namespace {

using namespace duplexsim;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> mode;
    std::optional<double> temp_c;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config, "experiment config (JSON)")->required();
    app->add_option("--seed", f.seed, "override the config seed");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--mode", f.mode, "cycle mode: analytical|detailed");
    app->add_option("--temp-c", f.temp_c, "operating temperature in Celsius");
}

harness::ExperimentConfig load(const CommonFlags& f) {
    harness::ExperimentConfig c = harness::load_config(f.config);
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.output_dir = *f.out;
    if (f.mode) c.hardware.mode = systolic::parse_cycle_mode(*f.mode);
    if (f.temp_c) {
        c.hardware.temperature_c = *f.temp_c;
        c.hardware.retention_us.reset();
    }
    c.validate();
    return c;
}

void emit(const harness::Report& r, const harness::ExperimentConfig& c) {
    harness::write_report(r, c.output_dir);
    std::cout << r.body.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"duplexsim: reversible-branch training and hybrid eDRAM accelerator simulator"};
    app.require_subcommand(1);

    CommonFlags lifetime_f, train_f, compare_f, sweep_f, schedule_f, validate_f;
    auto* lifetime = app.add_subcommand("lifetime", "data lifetime and refresh analysis of the workload");
    add_common(lifetime, lifetime_f);
    auto* schedule = app.add_subcommand("schedule", "print the instruction schedule of the workload");
    add_common(schedule, schedule_f);
    std::string pass = "iteration";
    schedule->add_option("--pass", pass, "forward|backward|iteration")
        ->check(CLI::IsMember({"forward", "backward", "iteration"}));
    auto* train = app.add_subcommand("train", "train the model and report time/energy to accuracy");
    add_common(train, train_f);
    auto* compare = app.add_subcommand("compare", "variant x hardware profile comparison");
    add_common(compare, compare_f);
    auto* sweep = app.add_subcommand("sweep", "sweep one hardware axis");
    add_common(sweep, sweep_f);
    std::optional<std::string> axis;
    sweep->add_option("--axis", axis, "temperature|array_size|zero_fraction|refresh_count");
    auto* validate = app.add_subcommand("validate-config", "check a config file and exit");
    add_common(validate, validate_f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*lifetime) {
            auto c = load(lifetime_f);
            emit(harness::run_lifetime(c), c);
        } else if (*schedule) {
            auto c = load(schedule_f);
            const auto d = c.workload.dims(c.workload.spec.variant);
            const auto s = pass == "forward"    ? sched::emit_forward_schedule(d)
                           : pass == "backward" ? sched::emit_backward_schedule(d)
                                                : sched::emit_iteration_schedule(d);
            std::cout << sched::to_text(s);
        } else if (*train) {
            auto c = load(train_f);
            emit(harness::run_train(c), c);
        } else if (*compare) {
            auto c = load(compare_f);
            emit(harness::run_compare(c), c);
        } else if (*sweep) {
            auto c = load(sweep_f);
            if (axis) c.sweep.axis = harness::parse_sweep_axis(*axis);
            c.validate();
            emit(harness::run_sweep(c), c);
        } else if (*validate) {
            auto c = load(validate_f);
            // static storage of the workload must fit the configured banks
            (void)harness::step_cost(c.workload.dims(c.workload.spec.variant), c.hardware, c.train.cfg.bfp);
            std::cout << "ok: " << validate_f.config << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const EncodingError& e) {
        // BFP settings are part of the config
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return kExitRun;
    }
    return kExitOk;
}
