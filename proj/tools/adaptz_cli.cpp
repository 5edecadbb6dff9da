#include <adaptz/cli_runner.hpp>
#include <adaptz/datastream.hpp>
#include <adaptz/regret_lab.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

int cmd_run(const std::string& config, const std::vector<std::string>& sets) {
    const adaptz::PlanConfig cfg = adaptz::parse_config_file(config, sets, &std::cerr);
    const adaptz::ExperimentPlan plan = adaptz::make_plan(cfg);
    std::cerr << "plan: " << plan.runs.size() << " runs\n";
    return adaptz::run_plan(plan, std::cerr);
}

int cmd_gen(const std::string& spec_file, const std::string& out) {
    auto [spec, seeded] = adaptz::drift_spec_from_key_values(adaptz::read_key_value_file(spec_file), spec_file);
    if (!seeded) std::cerr << "note: no seed in " << spec_file << ", using " << spec.seed << '\n';
    adaptz::write_csv(out, adaptz::generate(spec));
    std::cerr << "wrote " << spec.length << " x " << spec.channels << " series to " << out << '\n';
    return 0;
}

int cmd_regret(const std::string& family, std::size_t seeds, std::uint64_t first_seed, const std::string& out) {
    namespace rl = adaptz::regret;
    std::vector<std::string> families;
    if (family == "all") families = rl::family_names();
    else families.push_back(family);
    std::ofstream file;
    if (!out.empty()) {
        file.open(out, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + out);
    }
    std::ostream& os = out.empty() ? std::cout : file;
    rl::write_report_header(os);
    std::size_t failures = 0;
    for (const auto& f : families) {
        for (std::size_t i = 0; i < seeds; ++i) {
            const rl::OCORun run = rl::run_oco(rl::make_family(f, first_seed + i));
            rl::write_report_row(os, run);
            if (!rl::check_bound(run).pass) ++failures;
        }
    }
    std::cerr << families.size() * seeds - failures << "/" << families.size() * seeds << " runs within the bound\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming online forecasting with feature-space adaptation"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> sets;
    auto* run = app.add_subcommand("run", "Execute an experiment plan");
    run->add_option("--config", config, "Plan config file (key = value)")->required()->check(CLI::ExistingFile);
    run->add_option("--set", sets, "Override a config key, key=value (repeatable)");

    std::string drift, out_csv;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic drift series");
    gen->add_option("--drift", drift, "Drift spec file (key = value)")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out_csv, "Output CSV")->required();

    std::string family;
    std::size_t seeds = 20;
    std::uint64_t first_seed = 2025;
    std::string report;
    auto* regret = app.add_subcommand("regret", "Check the dynamic-regret bound on convex problems");
    regret->add_option("--family", family, "static | piecewise | rotating | all")
        ->required()
        ->check(CLI::IsMember({"static", "piecewise", "rotating", "all"}));
    regret->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
    regret->add_option("--first-seed", first_seed, "First seed");
    regret->add_option("--out", report, "Report CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config, sets);
        if (*gen) return cmd_gen(drift, out_csv);
        if (*regret) return cmd_regret(family, seeds, first_seed, report);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 2;
    }
    return 0;
}
