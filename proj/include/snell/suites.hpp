#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snell/problem.hpp"
#include "snell/types.hpp"

namespace snell {

struct GridConfig {
    Index nt = 0;
    Index nx = 0;
    double x_lo = 0.0;
    double x_hi = 0.0;
};

/// Flat key-value run configuration (JSON document, schema in the README).
struct RunConfig {
    std::string problem_name;
    std::map<std::string, double> params;
    std::vector<GridConfig> grids;
    int control_grid_count = 21;
    std::vector<double> penalty_ladder = {1, 2, 4, 8, 16, 32, 64, 128, 256};
    std::vector<std::string> suites;
    std::uint64_t seed = 1;
    std::string output_dir = ".";
    bool normalize_timestamps = false;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
};

struct SuiteResult {
    std::string name;
    std::string inputs_digest;
    bool pass = false;
    double wall_ms = 0.0;
    std::map<std::string, double> metrics;
    std::vector<std::string> notes;
};

struct ExperimentReport {
    std::string problem;
    std::uint64_t seed = 0;
    bool all_pass = false;
    std::vector<SuiteResult> suites;

    std::string to_json_text() const;
};

/// Executes the configured suites in declared order, writes the JSON report
/// and CSV fields into the output directory, and returns the report. Suite
/// failures are embedded in the report rather than thrown.
ExperimentReport run(const RunConfig& config);

/// Side-by-side metric comparison for regression tracking. Empty string when
/// the reports agree; KeyMismatch when the suite or metric keys differ.
std::string report_diff(const ExperimentReport& a, const ExperimentReport& b);

}  // namespace snell
