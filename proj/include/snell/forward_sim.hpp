#pragma once

#include <cstdint>
#include <functional>

#include "snell/problem.hpp"
#include "snell/types.hpp"

namespace snell {

/// Markov feedback policy (t, x) -> control.
using FeedbackPolicy = std::function<Vector(double, const Vector&)>;

/// Control input for the simulator: a feedback policy or a deterministic
/// control path (one control per step, shared across paths).
struct SimControl {
    FeedbackPolicy policy;
    Matrix fixed_path;  // Nt x k when policy is absent

    static SimControl feedback(FeedbackPolicy p) { return {std::move(p), Matrix()}; }
    static SimControl path(Matrix controls) { return {nullptr, std::move(controls)}; }
    static SimControl constant(const Vector& v, Index nt) {
        Matrix m(nt, v.size());
        m.rowwise() = v.transpose();
        return path(std::move(m));
    }
};

/// Euler-Maruyama paths of the controlled diffusion with counter-based
/// Gaussian increments keyed by (seed, path, step, component): bit-identical
/// results regardless of evaluation order.
struct PathBundle {
    Vector times;           // Nt+1
    Matrix states;          // M x (Nt+1)*n, row-major blocks of size n per step
    Matrix brownian;        // M x Nt*d increments
    Matrix controls_used;   // M x Nt*k
    std::uint64_t seed = 0;
    Index n_paths = 0, n_steps = 0, state_dim = 1, brownian_dim = 1, control_dim = 1;

    Vector state(Index path, Index step) const {
        return states.row(path).segment(step * state_dim, state_dim).transpose();
    }
    double state1(Index path, Index step) const { return states(path, step * state_dim); }
    Vector increment(Index path, Index step) const {
        return brownian.row(path).segment(step * brownian_dim, brownian_dim).transpose();
    }
    Vector control(Index path, Index step) const {
        return controls_used.row(path).segment(step * control_dim, control_dim).transpose();
    }
};

/// Simulates M paths over [t0, t1] (t1 defaults to the spec horizon).
/// Throws NonFiniteState when a path blows up.
PathBundle simulate(const ProblemSpec& spec, const SimControl& control, double t0,
                    const Vector& x0, Index nt, Index m_paths, std::uint64_t seed,
                    double t1 = -1.0);

/// Same, continuing one path per row of `states0` (M x n).
PathBundle simulate_from(const ProblemSpec& spec, const SimControl& control, double t0,
                         const Matrix& states0, Index nt, std::uint64_t seed, double t1 = -1.0);

/// Short-window moment ratio E[sup_{s<=delta} |X_s - x0|^2] / delta for the
/// bundle, which the moment property tests require to stay bounded as the
/// window shrinks.
double moment_check(const PathBundle& bundle, const Vector& x0, double delta);

/// Initial-condition stability ratio E[sup_s |X - X'|^2] / |z0 - z0'|^2 with
/// common increments, the computable side of the flow estimate.
double displacement_ratio(const ProblemSpec& spec, const SimControl& control, const Vector& x0a,
                          const Vector& x0b, double t0, Index nt, Index m_paths,
                          std::uint64_t seed);

}  // namespace snell
