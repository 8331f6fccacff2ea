#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "snell/types.hpp"

namespace snell {

/// Compact control set: either an explicit finite list or a box with a
/// uniform per-axis discretization.
struct ControlSet {
    enum class Kind { finite, box };

    Kind kind = Kind::finite;
    std::vector<Vector> points;  // finite sets
    Vector lo, hi;               // box bounds
    int per_axis = 21;           // default box discretization count

    static ControlSet finite(std::vector<Vector> pts);
    static ControlSet box(Vector lo, Vector hi, int per_axis = 21);

    /// Discretized control list. `per_axis_override > 0` refines box sets;
    /// finite sets are returned as-is.
    std::vector<Vector> grid(int per_axis_override = 0) const;

    bool empty() const;
    Index dim() const;
};

/// The full data tuple of a control problem: dynamics (b, sigma), recursive
/// driver g, terminal reward, obstacle, control set, horizon and the declared
/// Lipschitz constant the coefficients are supposed to obey.
struct ProblemSpec {
    int state_dim = 1;
    int brownian_dim = 1;
    int control_dim = 1;

    std::function<Vector(double, const Vector&, const Vector&)> drift;       // (t,x,v) -> R^n
    std::function<Matrix(double, const Vector&, const Vector&)> diffusion;   // (t,x,v) -> R^{n x d}
    std::function<double(double, const Vector&, double, const Vector&, const Vector&)>
        driver;                                                              // (t,x,y,z,v) -> R
    std::function<double(const Vector&)> terminal;                           // x -> R
    std::function<double(double, const Vector&)> obstacle;                   // (t,x) -> R

    ControlSet controls;
    double horizon = 1.0;
    double lipschitz_L = 1.0;

    Vector initial_state;  // conventional evaluation point for experiments
    std::string name;      // builtin tag, empty for custom specs

    // Scalar conveniences for the one-dimensional solvers.
    double drift1(double t, double x, const Vector& v) const { return drift(t, vec1(x), v)(0); }
    Vector sigma_row1(double t, double x, const Vector& v) const {
        return diffusion(t, vec1(x), v).row(0).transpose();
    }
    double driver1(double t, double x, double y, const Vector& z, const Vector& v) const {
        return driver(t, vec1(x), y, z, v);
    }
    double terminal1(double x) const { return terminal(vec1(x)); }
    double obstacle1(double t, double x) const { return obstacle(t, vec1(x)); }
};

struct AssumptionReport {
    std::map<std::string, double> max_observed_lipschitz;  // per coefficient: b, sigma, g, phi, h
    struct Probe {
        double t;
        Vector x;
        Vector v;
        std::string coefficient;
    };
    std::vector<Probe> violation_points;
    bool terminal_consistent = true;  // phi(x) >= h(T,x) at all probes
    bool passed = false;
};

/// Samples random difference quotients of every coefficient over a probe box
/// ([0,T] x [-10,10]^n x U by default) and compares against the declared
/// Lipschitz constant. Also probes terminal consistency phi(x) >= h(T,x).
/// Deterministic for a fixed seed. Throws NonFiniteCoefficient if any probe
/// returns NaN or infinity.
AssumptionReport validate_spec(const ProblemSpec& spec, int probes, std::uint64_t seed,
                               double probe_halfwidth = 10.0);

/// Benchmark library. Names: american_put, controlled_drift, constant_obstacle,
/// inactive_obstacle, nonlinear_driver_put. Unknown params are rejected.
ProblemSpec builtin_problem(const std::string& name,
                            const std::map<std::string, double>& params = {});

std::vector<std::string> builtin_problem_names();

}  // namespace snell
