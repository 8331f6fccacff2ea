#pragma once

#include <vector>

#include "snell/problem.hpp"
#include "snell/types.hpp"

namespace snell {

/// One-step transition kernel of a lattice node under one control.
/// Probabilities match the drift exactly and the second moment up to the
/// drift-squared term, so local consistency holds to machine precision:
///   sum p * (x_dest - x_j)               = b*dt
///   sum p * (x_dest - x_j)^2 - (b*dt)^2  = sigma^2*dt
struct KernelRow {
    double p_down, p_mid, p_up;
    Index j_down, j_mid, j_up;  // destinations, clamped at the reflecting edges
    double drift_dt;            // b(t_i, x_j, v_m) * dt
    double sigma;               // sqrt(sigma sigma^T), scalar volatility
    Vector sigma_row;           // d-vector row of the diffusion matrix
};

/// Recombining trinomial Markov-chain approximation of a one-dimensional
/// controlled diffusion on a uniform time/state grid. Kernels are computed on
/// demand from the stored coefficients (the grid x controls scan at build time
/// validates CFL feasibility and kernel nonnegativity once).
class Lattice {
public:
    Vector t_grid;                  // Nt+1 times
    Vector x_grid;                  // Nx+1 states
    std::vector<Vector> controls;   // discretized control set

    Index nt() const { return t_grid.size() - 1; }
    Index nx() const { return x_grid.size() - 1; }
    Index n_controls() const { return static_cast<Index>(controls.size()); }
    double dt() const { return dt_; }
    double dx() const { return dx_; }
    double t0() const { return t_grid(0); }
    double t1() const { return t_grid(nt()); }

    KernelRow kernel(Index i, Index j, Index m) const;

    const ProblemSpec& spec() const { return spec_; }

    friend Lattice build_lattice(const ProblemSpec&, double, double, Index, double, double, Index,
                                 int);

private:
    ProblemSpec spec_;
    double dt_ = 0.0, dx_ = 0.0;
};

/// Builds the chain over [t0, t1] x [x_lo, x_hi]. Throws CFLViolation when a
/// node/control pair cannot carry nonnegative probabilities at this grid and
/// DegenerateDomain when the state interval is empty.
Lattice build_lattice(const ProblemSpec& spec, double t0, double t1, Index nt, double x_lo,
                      double x_hi, Index nx, int control_grid_count = 0);

/// One-step conditional expectation of a nodal field. Anchored at the middle
/// destination so constant fields are reproduced bit-for-bit.
double expectation(const Lattice& lattice, Index i, Index j, Index m, const Vector& field);

/// Smallest time-step count >= nt_floor (rounded up to a multiple of `round_to`)
/// for which every node/control pair of the would-be lattice satisfies the CFL
/// bound sigma^2 dt/dx^2 + |b| dt/dx <= 1 with a small safety margin.
Index cfl_feasible_nt(const ProblemSpec& spec, double t0, double t1, double x_lo, double x_hi,
                      Index nx, Index nt_floor, int control_grid_count = 0, Index round_to = 4);

}  // namespace snell
