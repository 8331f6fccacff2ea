#pragma once

#include "snell/problem.hpp"
#include "snell/types.hpp"

namespace snell {

/// Grid value function from a finite-difference solve: u over (time, node),
/// the obstacle field, the contact set (u = h within 1e-10) and the per-node
/// maximizing control.
struct ValueField {
    Vector t_grid;
    Vector x_grid;
    Matrix u;         // (Nt+1) x (Nx+1)
    Matrix h_field;   // obstacle on the same grid
    IntMatrix active; // 1 where u touches the obstacle
    IntMatrix argmax_control;

    double dt() const { return t_grid(1) - t_grid(0); }
    double dx() const { return x_grid(1) - x_grid(0); }
    Index nt() const { return t_grid.size() - 1; }
    Index nx() const { return x_grid.size() - 1; }

    /// Piecewise-linear evaluation at an off-grid point (t on the grid).
    double at(double t, double x) const;
    /// Three-point quadratic evaluation in x, for oracle comparisons where
    /// the query point falls between nodes.
    double at_quadratic(double t, double x) const;
    Index time_index(double t) const;
};

/// Explicit monotone scheme for the obstacle HJB variational inequality:
/// backward in time, per node the sup over the discretized control set of the
/// second-order stencil plus driver (the gradient enters the driver's z slot
/// multiplied by the diffusion row), then projection onto {u >= h}. Boundary
/// rows use a zero second difference (linear extrapolation). Throws
/// CFLViolation when sigma^2 dt/dx^2 + |b| dt/(2 dx) > 1/2 anywhere.
ValueField solve_hjb_fd(const ProblemSpec& spec, const Vector& t_grid, const Vector& x_grid,
                        int control_grid_count = 0);

/// Penalized variant: no projection, driver augmented by n (u - h)^- resolved
/// semi-implicitly.
ValueField solve_penalized_hjb(const ProblemSpec& spec, const Vector& t_grid, const Vector& x_grid,
                               double n_penalty, int control_grid_count = 0);

/// Max interior residual of the complementarity form
/// min(u - h, -du/dt - sup_v {L u + g}) with centered space and forward time
/// differences; shrinks under grid refinement for the monotone scheme. Rows
/// within `terminal_buffer` of the horizon are excluded: the payoff kink is
/// not resolvable by centered differences there and would dominate the max.
double residual_check(const ValueField& field, const ProblemSpec& spec,
                      int control_grid_count = 0, double terminal_buffer = 0.1);

/// Smallest step count satisfying the explicit-scheme CFL bound, rounded up
/// to a multiple of `round_to`.
Index hjb_feasible_nt(const ProblemSpec& spec, double t0, double t1, double x_lo, double x_hi,
                      Index nx, Index nt_floor, int control_grid_count = 0, Index round_to = 4);

}  // namespace snell
