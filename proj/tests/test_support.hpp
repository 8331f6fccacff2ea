#pragma once

#include <cmath>
#include <cstdint>

#include "snell/lattice.hpp"
#include "snell/problem.hpp"
#include "snell/rbsde.hpp"
#include "snell/rng.hpp"

namespace snell::testing {

/// Randomized well-posed problem on [-2, 2]: affine drift, constant
/// diffusion, affine driver with modest (y, z) slopes, kinked terminal and an
/// obstacle that sits below the terminal at the horizon but bites earlier.
inline ProblemSpec random_spec(std::uint64_t seed) {
    const CounterRng rng(seed);
    const double b0 = rng.uniform_range(-0.5, 0.5, 1, 0);
    const double b1 = rng.uniform_range(-0.3, 0.3, 1, 1);
    const double s0 = rng.uniform_range(0.5, 1.5, 1, 2);
    const double g0 = rng.uniform_range(-1.0, 1.0, 1, 3);
    const double g1 = rng.uniform_range(-0.5, 0.5, 1, 4);
    const double gy = rng.uniform_range(-0.3, 0.3, 1, 5);
    const double gz = rng.uniform_range(-0.3, 0.3, 1, 6);
    const double phi0 = rng.uniform_range(-1.0, 1.0, 1, 7);
    const double phi1 = rng.uniform_range(-0.8, 0.8, 1, 8);
    const double kink = rng.uniform_range(-1.0, 1.0, 1, 9);
    const double kink_slope = rng.uniform_range(0.0, 0.8, 1, 10);
    const double gap = rng.uniform_range(0.05, 0.6, 1, 11);
    const double decay = rng.uniform_range(0.0, 0.5, 1, 12);

    ProblemSpec s;
    s.state_dim = s.brownian_dim = s.control_dim = 1;
    s.horizon = 0.5;
    s.drift = [b0, b1](double, const Vector& x, const Vector&) {
        return Vector(vec1(b0 + b1 * x(0)));
    };
    s.diffusion = [s0](double, const Vector&, const Vector&) {
        Matrix m(1, 1);
        m(0, 0) = s0;
        return m;
    };
    s.driver = [g0, g1, gy, gz](double, const Vector& x, double y, const Vector& z,
                                const Vector&) {
        return g0 + g1 * x(0) + gy * y + gz * z(0);
    };
    s.terminal = [phi0, phi1, kink, kink_slope](const Vector& x) {
        return phi0 + phi1 * x(0) + kink_slope * std::abs(x(0) - kink);
    };
    const auto phi = s.terminal;
    s.obstacle = [phi, gap, decay](double t, const Vector& x) {
        return phi(x) - gap - decay * (0.5 - t);
    };
    s.controls = ControlSet::finite({Vector::Zero(1)});
    s.lipschitz_L = 5.0;
    s.initial_state = vec1(0.0);
    s.name = "random";
    return s;
}

inline Vector terminal_on_grid(const ProblemSpec& spec, const Vector& x_grid) {
    Vector t(x_grid.size());
    for (Index j = 0; j < x_grid.size(); ++j) t(j) = spec.terminal1(x_grid(j));
    return t;
}

inline ObstacleFn1 obstacle_of(const ProblemSpec& spec) {
    return [&spec](double t, double x) { return spec.obstacle1(t, x); };
}

inline Lattice small_lattice(const ProblemSpec& spec, double x_lo = -2.0, double x_hi = 2.0,
                             Index nx = 60) {
    const Index nt = cfl_feasible_nt(spec, 0.0, spec.horizon, x_lo, x_hi, nx, 8);
    return build_lattice(spec, 0.0, spec.horizon, nt, x_lo, x_hi, nx);
}

}  // namespace snell::testing
