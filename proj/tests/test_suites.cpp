#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "snell/forward_sim.hpp"
#include "snell/io.hpp"
#include "snell/suites.hpp"

using namespace snell;

namespace {

std::string tmp_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("snell_test_" + tag);
    std::filesystem::create_directories(dir);
    return dir.string();
}

RunConfig constant_obstacle_config(const std::string& tag) {
    RunConfig cfg = RunConfig::from_json_text(R"({
        "problem": {"name": "constant_obstacle", "params": {"c": 5.0, "T": 1.0}},
        "grids": [{"nt": 64, "nx": 32, "x_lo": -4.0, "x_hi": 4.0}],
        "suites": ["invariants"],
        "seed": 11,
        "normalize_timestamps": true
    })");
    cfg.output_dir = tmp_dir(tag);
    return cfg;
}

}  // namespace

TEST_CASE("config parsing accepts the documented schema") {
    const RunConfig cfg = RunConfig::from_json_text(R"({
        "problem": {"name": "american_put", "params": {"S0": 90.0}},
        "grids": [{"nt": 100, "nx": 100, "x_lo": 20.0, "x_hi": 300.0}],
        "control_grid_count": 11,
        "penalty_ladder": [1, 4, 16],
        "suites": ["oracle", "invariants"],
        "seed": 7,
        "output_dir": "out"
    })");
    CHECK(cfg.problem_name == "american_put");
    CHECK(cfg.params.at("S0") == 90.0);
    CHECK(cfg.grids.size() == 1);
    CHECK(cfg.penalty_ladder.size() == 3);
    CHECK(cfg.seed == 7);
}

TEST_CASE("config parsing rejects malformed or empty input") {
    CHECK_THROWS_AS(RunConfig::from_json_text("{ not json"), ConfigParseError);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"problem": {"name": "american_put"},
        "suites": []})"),
                    ConfigParseError);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"problem": {"name": "american_put"},
        "suites": ["no_such_suite"]})"),
                    ConfigParseError);
    CHECK_THROWS_AS(RunConfig::from_file("/no/such/file.json"), ConfigParseError);
    // Parse errors carry a position.
    try {
        RunConfig::from_json_text("{\n  \"problem\": ???\n}");
        CHECK(false);
    } catch (const ConfigParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("invariants suite on the constant obstacle: all pass, zero K mass") {
    const RunConfig cfg = constant_obstacle_config("inv");
    const ExperimentReport report = run(cfg);
    REQUIRE(report.suites.size() == 1);
    CHECK(report.all_pass);
    CHECK(report.suites[0].metrics.at("k_mass") == 0.0);
    CHECK(report.suites[0].metrics.at("flat_off_defect") == 0.0);
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.json"));
}

TEST_CASE("oracle suite on the put reports the binomial gap") {
    RunConfig cfg = RunConfig::from_json_text(R"({
        "problem": {"name": "american_put"},
        "grids": [{"nt": 100, "nx": 100, "x_lo": 20.0, "x_hi": 300.0}],
        "suites": ["oracle"],
        "seed": 3,
        "normalize_timestamps": true
    })");
    cfg.output_dir = tmp_dir("oracle");
    const ExperimentReport report = run(cfg);
    CHECK(report.all_pass);
    CHECK(report.suites[0].metrics.at("rel_gap") <= 0.005);
    CHECK(report.suites[0].metrics.at("nt_effective") >=
          report.suites[0].metrics.at("nt_requested"));
}

TEST_CASE("suite failures are embedded, not thrown") {
    RunConfig cfg = constant_obstacle_config("embed");
    cfg.suites = {"oracle"};  // oracle requires a put-family problem
    const ExperimentReport report = run(cfg);
    CHECK_FALSE(report.all_pass);
    REQUIRE(report.suites.size() == 1);
    CHECK_FALSE(report.suites[0].pass);
    CHECK_FALSE(report.suites[0].notes.empty());
}

TEST_CASE("reports are byte-identical for identical config and seed") {
    const RunConfig cfg = constant_obstacle_config("repro");
    const ExperimentReport a = run(cfg);
    const ExperimentReport b = run(cfg);
    CHECK(a.to_json_text() == b.to_json_text());
}

TEST_CASE("report_diff: empty on identical runs, metric lines otherwise") {
    const RunConfig cfg = constant_obstacle_config("diff");
    const ExperimentReport a = run(cfg);
    CHECK(report_diff(a, a).empty());

    RunConfig finer = cfg;
    finer.grids[0].nx = 64;
    finer.output_dir = tmp_dir("diff2");
    const ExperimentReport b = run(finer);
    const std::string diff = report_diff(a, b);
    CHECK(diff.find("invariants.") != std::string::npos);

    RunConfig other = cfg;
    other.suites = {"bruteforce"};
    other.output_dir = tmp_dir("diff3");
    const ExperimentReport c = run(other);
    CHECK_THROWS_AS(report_diff(a, c), KeyMismatch);
}

TEST_CASE("bruteforce suite passes on the random tree family") {
    RunConfig cfg = constant_obstacle_config("bf");
    cfg.suites = {"bruteforce"};
    const ExperimentReport report = run(cfg);
    CHECK(report.all_pass);
    CHECK(report.suites[0].metrics.at("max_gap") <= 1e-12);
}

TEST_CASE("csv exports carry the documented headers") {
    const auto dir = tmp_dir("csv");
    const ProblemSpec co = builtin_problem("constant_obstacle");
    const Lattice lat = build_lattice(co, 0.0, 1.0, 16, -4.0, 4.0, 8);
    write_lattice_csv(lat, dir + "/lattice.csv");
    const PathBundle b = simulate(co, SimControl::constant(Vector::Zero(1), 4), 0.0, vec1(0.0),
                                  4, 3, 1);
    write_paths_csv(b, dir + "/paths.csv");
    auto first_line = [](const std::string& path) {
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        return line;
    };
    CHECK(first_line(dir + "/lattice.csv") == "i,node,control,p_down,p_mid,p_up");
    CHECK(first_line(dir + "/paths.csv") == "path_id,step,t,x0");
}

TEST_CASE("the full suite roster passes on a small put configuration") {
    RunConfig cfg = RunConfig::from_json_text(R"({
        "problem": {"name": "american_put"},
        "grids": [{"nt": 64, "nx": 80, "x_lo": 20.0, "x_hi": 300.0}],
        "penalty_ladder": [1, 4, 16, 64, 256],
        "suites": ["oracle", "invariants", "penalization", "dpp", "regularity",
                   "bruteforce", "stability"],
        "seed": 5,
        "normalize_timestamps": true
    })");
    cfg.output_dir = tmp_dir("roster");
    const ExperimentReport report = run(cfg);
    for (const auto& s : report.suites) {
        INFO(s.name, s.notes.empty() ? "" : s.notes.front());
        CHECK(s.pass);
    }
    CHECK(report.all_pass);
}
