#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "snell/problem.hpp"
#include "snell/suites.hpp"

int main(int argc, char** argv) {
    CLI::App app{"snell: solvers and verification suites for obstacle-constrained "
                 "recursive optimal control"};

    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool list_problems = false;
    bool normalize_timestamps = false;

    app.add_option("--config", config_path, "Path to the JSON run configuration");
    app.add_option("--output", output_dir, "Output directory (overrides the config)");
    auto* seed_opt = app.add_option("--seed", seed, "Seed override");
    app.add_flag("--list-problems", list_problems, "List builtin problems and exit");
    app.add_flag("--normalize-timestamps", normalize_timestamps,
                 "Zero wall times in the report for byte-stable output");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;

    if (list_problems) {
        for (const auto& name : snell::builtin_problem_names()) std::cout << name << '\n';
        return 0;
    }
    if (config_path.empty()) {
        std::cerr << "error: --config is required (or use --list-problems)\n";
        return 2;
    }

    try {
        snell::RunConfig config = snell::RunConfig::from_file(config_path);
        if (!output_dir.empty()) config.output_dir = output_dir;
        if (seed_set) config.seed = seed;
        if (normalize_timestamps) config.normalize_timestamps = true;

        const snell::ExperimentReport report = snell::run(config);
        for (const auto& s : report.suites) {
            std::cout << (s.pass ? "[PASS] " : "[FAIL] ") << s.name;
            for (const auto& note : s.notes) std::cout << " (" << note << ")";
            std::cout << '\n';
        }
        std::cout << "report: " << config.output_dir << "/report.json\n";
        return report.all_pass ? 0 : 1;
    } catch (const snell::ConfigParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const snell::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
