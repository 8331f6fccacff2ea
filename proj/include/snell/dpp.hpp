#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "snell/hjb.hpp"
#include "snell/lattice.hpp"
#include "snell/rbsde.hpp"
#include "snell/types.hpp"

namespace snell {

/// Backward-semigroup query: reflected value at (t, x) of the equation on
/// [t, t+delta] with the given terminal field and control law.
struct SemigroupQuery {
    double t = 0.0;
    double x = 0.0;
    double delta = 0.0;
    Vector terminal_field;  // over the window lattice's x grid
    ControlLaw control = ControlLaw::fixed(0);
};

/// Evaluates the semigroup through the lattice solver. The lattice must span
/// exactly [t, t+delta] (WindowMismatch otherwise); off-grid x is linearly
/// interpolated.
double semigroup_eval(const SemigroupQuery& query, const Lattice& window);

struct DPPReport {
    std::vector<std::pair<double, double>> sample_points;  // (t, x)
    Vector lhs;          // u(t, x)
    Vector rhs_frozen;   // sup over constant controls on the window
    Vector rhs_policy;   // per-node re-optimized control on the window
    double max_abs_gap_frozen = 0.0;
    double max_abs_gap_policy = 0.0;
    Index window_steps = 0;
    Index nx = 0;
};

/// Dynamic-programming check: compares u(t,x) against the sup over controls
/// of the semigroup applied to u(t+delta, .). Two variants are reported:
/// controls frozen over the window and per-node re-optimization (the lattice
/// realization of the adapted sup). delta must be a grid multiple.
DPPReport dpp_check(const ProblemSpec& spec, const ValueField& u_field, double delta,
                    const std::vector<std::pair<double, double>>& sample_points,
                    int control_grid_count = 0);

/// Event family for the partition test. The non-degenerate event splits the
/// sample on the sign of W at t/2; full_space is the trivial partition A = O.
enum class PartitionEvent { sign_at_half_time, full_space };

/// Partition-concatenation identity test: realizes an F_t-measurable event A
/// from the pre-t Brownian history, continues the paths under v1, v2 and the
/// concatenated control, and returns the largest path discrepancy
/// |Y^concat - (1_A Y^v1 + 1_Ac Y^v2)| at time t. Regressions in the
/// concatenated solve are stratified by control branch.
double partition_concat_check(const ProblemSpec& spec, double t, double x, const Vector& v1,
                              const Vector& v2, std::uint64_t seed, Index m_paths,
                              Index nt_pre = 16, Index nt_post = 25, int basis_degree = 3,
                              PartitionEvent event = PartitionEvent::sign_at_half_time);

/// Exhaustive mixed control/stopping oracle on a tiny recombining tree:
/// enumerates every node-indexed control assignment and every stopping
/// region (stopping forced at the horizon), evaluates each pair exactly over
/// the tree probabilities and returns the maximum expected payoff. Requires a
/// driver without (y, z) dependence; guarded to 6 decision nodes.
double mixed_bruteforce(const Lattice& tree, Index start_node, const ObstacleFn1& obstacle,
                        const Vector& terminal);

/// Tiny driftless two-control tree instance with tabulated driver, obstacle
/// and terminal data derived from the seed. p_mid vanishes on these trees, so
/// the reachable fan from the start node stays within the enumeration cap.
struct TreeCase {
    ProblemSpec spec;
    Index nt = 3;
    Index nx = 6;
    double x_lo = 0.0;
    double x_hi = 6.0;
    Index start_node = 3;
};

TreeCase random_tree_case(std::uint64_t seed);

struct RegularityRecord {
    double lip_x_ratio = 0.0;
    double holder_t_ratio = 0.0;
    double growth_ratio = 0.0;
};

/// Regularity ratios of a value field: the composite space-increment ratio,
/// the 1/2-Hoelder-normalized time-increment ratio (net of the obstacle's own
/// time variation), and the linear-growth ratio |u|/(1+|x|).
RegularityRecord regularity_check(const ValueField& u_field);

}  // namespace snell
