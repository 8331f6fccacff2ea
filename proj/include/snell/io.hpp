#pragma once

#include <string>

#include "snell/dpp.hpp"
#include "snell/forward_sim.hpp"
#include "snell/hjb.hpp"
#include "snell/lattice.hpp"
#include "snell/rbsde.hpp"

namespace snell {

// Debug/plotting exports. Columns are documented in the README.

/// (i, node, control, p_down, p_mid, p_up)
void write_lattice_csv(const Lattice& lattice, const std::string& path);

/// (t, x, u, h, active, argmax_control)
void write_field_csv(const ValueField& field, const std::string& path);

/// (t, x, Y, Z..., K) for lattice-mode solutions.
void write_solution_csv(const Lattice& lattice, const RBSDESolution& sol, const std::string& path);

/// (path_id, step, t, x...)
void write_paths_csv(const PathBundle& bundle, const std::string& path);

/// DPP gap table (t, x, lhs, rhs_frozen, rhs_policy).
void write_dpp_csv(const DPPReport& report, const std::string& path);

/// JSON rendering of a DPP report (sample points, both sup variants, gaps).
std::string dpp_report_json(const DPPReport& report);

}  // namespace snell
