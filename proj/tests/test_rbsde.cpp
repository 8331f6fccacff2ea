#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snell/forward_sim.hpp"
#include "snell/rbsde.hpp"
#include "snell/reference.hpp"
#include "test_support.hpp"

using namespace snell;
using testing::obstacle_of;
using testing::terminal_on_grid;

namespace {

const ObstacleFn1 kNoObstacle = [](double, double) { return kInactiveObstacle; };

Lattice put_lattice(const ProblemSpec& put, Index nx = 200, double x_lo = 20.0,
                    double x_hi = 300.0) {
    const Index nt = cfl_feasible_nt(put, 0.0, put.horizon, x_lo, x_hi, nx, 100);
    return build_lattice(put, 0.0, put.horizon, nt, x_lo, x_hi, nx);
}

}  // namespace

TEST_CASE("inactive obstacle: plain expectation, zero reflection") {
    ProblemSpec s = testing::random_spec(3);
    const Lattice lat = testing::small_lattice(s);
    const Vector terminal = terminal_on_grid(s, lat.x_grid);
    const DriverFn1 zero_g = [](double, double, double, const Vector&, const Vector&) {
        return 0.0;
    };
    const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0), terminal,
                                                      kNoObstacle, zero_g);
    CHECK(sol.K.cwiseAbs().maxCoeff() == 0.0);

    // With g = 0 and no reflection the backward sweep is the iterated kernel
    // expectation of the terminal field.
    Vector field = terminal;
    for (Index i = lat.nt() - 1; i >= 0; --i) {
        Vector prev(lat.nx() + 1);
        for (Index j = 0; j <= lat.nx(); ++j) prev(j) = expectation(lat, i, j, 0, field);
        field = prev;
    }
    CHECK((sol.Y.row(0).transpose() - field).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("constant obstacle: Y stays at the constant exactly") {
    const ProblemSpec co = builtin_problem("constant_obstacle", {{"c", 5.0}, {"T", 1.0}});
    const Lattice lat = build_lattice(co, 0.0, 1.0, 64, -4.0, 4.0, 32);
    const Vector terminal = Vector::Constant(33, 5.0);
    const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0), terminal,
                                                      obstacle_of(co));
    CHECK((sol.Y.array() == 5.0).all());
    CHECK(sol.K.cwiseAbs().maxCoeff() == 0.0);
    CHECK(sol.Z.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("american put on the lattice matches the binomial oracle") {
    const ProblemSpec put = builtin_problem("american_put");
    const Lattice lat = put_lattice(put);
    const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0),
                                                      terminal_on_grid(put, lat.x_grid),
                                                      obstacle_of(put));
    const ValueField f = to_value_field(lat, sol);
    const double oracle = crr_american_put(100.0, 100.0, 0.05, 0.2, 1.0, 10000);
    CHECK(std::abs(f.at_quadratic(0.0, 100.0) - oracle) / oracle <= 0.005);
}

TEST_CASE("martingale integrand matches the closed-form gradient") {
    // European put: Z(0, x) ~ sigma(x) du/dx with du/dx = N(d1) - 1.
    const ProblemSpec euro = builtin_problem("inactive_obstacle");
    const Lattice lat = put_lattice(euro, 280);  // dx = 1, x = 100 is a node
    const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0),
                                                      terminal_on_grid(euro, lat.x_grid),
                                                      obstacle_of(euro));
    const Index j100 = 80;
    REQUIRE(lat.x_grid(j100) == doctest::Approx(100.0));
    const double d1 = (std::log(1.0) + (0.05 + 0.02) * 1.0) / 0.2;
    const double delta = normal_cdf(d1) - 1.0;
    const double z_expected = 0.2 * 100.0 * delta;
    CHECK(sol.Z(0, j100) == doctest::Approx(z_expected).epsilon(0.02));
}

TEST_CASE("penalty zero reproduces the unreflected sweep bit-for-bit") {
    const ProblemSpec put = builtin_problem("american_put");
    const Lattice lat = put_lattice(put);
    const Vector terminal = terminal_on_grid(put, lat.x_grid);
    const RBSDESolution refl = solve_reflected_lattice(lat, ControlLaw::fixed(0), terminal,
                                                       kNoObstacle);
    const RBSDESolution pen0 = solve_penalized_lattice(lat, ControlLaw::fixed(0), terminal,
                                                       kNoObstacle, 0.0);
    CHECK((refl.Y - pen0.Y).cwiseAbs().maxCoeff() == 0.0);
    CHECK(refl.K.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pen0.K.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("penalized family: constant obstacle is a fixed point for every n") {
    const ProblemSpec co = builtin_problem("constant_obstacle", {{"c", 5.0}, {"T", 1.0}});
    const Lattice lat = build_lattice(co, 0.0, 1.0, 64, -4.0, 4.0, 32);
    const Vector terminal = Vector::Constant(33, 5.0);
    for (double n : {0.0, 1.0, 16.0, 256.0}) {
        const RBSDESolution sol = solve_penalized_lattice(lat, ControlLaw::fixed(0), terminal,
                                                          obstacle_of(co), n);
        CHECK((sol.Y.array() == 5.0).all());
    }
}

TEST_CASE("penalized family increases to the reflected solution") {
    const ProblemSpec put = builtin_problem("american_put");
    const Lattice lat = put_lattice(put);
    const Vector terminal = terminal_on_grid(put, lat.x_grid);
    const auto obstacle = obstacle_of(put);
    const RBSDESolution reflected = solve_reflected_lattice(lat, ControlLaw::fixed(0), terminal,
                                                            obstacle);
    Matrix prev;
    double gap64 = 0.0, gap256 = 0.0;
    for (double n : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0}) {
        const RBSDESolution pen = solve_penalized_lattice(lat, ControlLaw::fixed(0), terminal,
                                                          obstacle, n);
        if (prev.size() > 0) CHECK((pen.Y - prev).minCoeff() >= -1e-10);
        CHECK((pen.Y - reflected.Y).maxCoeff() <= 1e-10);
        if (n == 64.0) gap64 = (pen.Y - reflected.Y).cwiseAbs().maxCoeff();
        if (n == 256.0) gap256 = (pen.Y - reflected.Y).cwiseAbs().maxCoeff();
        prev = pen.Y;
    }
    CHECK(gap256 < gap64);
}

TEST_CASE("flat-off condition holds exactly on builtins and random specs") {
    for (const auto& name : {"american_put", "constant_obstacle", "nonlinear_driver_put"}) {
        const ProblemSpec spec = builtin_problem(name);
        const Lattice lat = name == std::string("constant_obstacle")
                                ? build_lattice(spec, 0.0, 1.0, 64, -4.0, 4.0, 32)
                                : put_lattice(spec);
        const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0),
                                                          terminal_on_grid(spec, lat.x_grid),
                                                          obstacle_of(spec));
        INFO(name);
        CHECK(flat_off_defect(sol) == 0.0);
        CHECK(min_reflection_increment(sol) >= 0.0);
        CHECK((sol.Y - sol.obstacle_S).minCoeff() >= 0.0);
    }
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const ProblemSpec spec = testing::random_spec(1000 + seed);
        const Lattice lat = testing::small_lattice(spec);
        const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0),
                                                          terminal_on_grid(spec, lat.x_grid),
                                                          obstacle_of(spec));
        CHECK(flat_off_defect(sol) == 0.0);
        CHECK(min_reflection_increment(sol) >= 0.0);
    }
}

TEST_CASE("comparison: identical data, shifted terminal, random ordered triples") {
    const ProblemSpec spec = testing::random_spec(77);
    const Lattice lat = testing::small_lattice(spec);
    const Vector terminal = terminal_on_grid(spec, lat.x_grid);
    const auto obstacle = obstacle_of(spec);
    const RBSDESolution base = solve_reflected_lattice(lat, ControlLaw::fixed(0), terminal,
                                                       obstacle);
    CHECK(comparison_check(base, base) == 0.0);

    const RBSDESolution lifted = solve_reflected_lattice(
        lat, ControlLaw::fixed(0), Vector(terminal.array() + 1.0), obstacle);
    CHECK(comparison_check(base, lifted) == 0.0);
    CHECK((lifted.Y - base.Y).minCoeff() >= -1e-12);

    const CounterRng rng(4242);
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const ProblemSpec dyn = testing::random_spec(500 + trial);
        const Lattice tl = testing::small_lattice(dyn);
        const Vector xi = terminal_on_grid(dyn, tl.x_grid);
        const double c0 = rng.uniform_range(0.0, 1.0, trial, 0);
        const double c1 = rng.uniform_range(0.0, 0.5, trial, 1);
        const double c1b = rng.uniform_range(0.0, 0.5, trial, 2);
        const double center = rng.uniform_range(-1.0, 1.0, trial, 3);
        const double c2 = rng.uniform_range(0.0, 1.0, trial, 4) * c0;

        const DriverFn1 g_low = [&dyn](double t, double x, double y, const Vector& z,
                                       const Vector& v) { return dyn.driver1(t, x, y, z, v); };
        const DriverFn1 g_high = [&dyn, c1, c1b, center](double t, double x, double y,
                                                         const Vector& z, const Vector& v) {
            return dyn.driver1(t, x, y, z, v) + c1 + c1b * std::abs(x - center);
        };
        const ObstacleFn1 s_low = obstacle_of(dyn);
        const ObstacleFn1 s_high = [&dyn, c2](double t, double x) {
            return dyn.obstacle1(t, x) + c2;
        };
        const RBSDESolution lo = solve_reflected_lattice(tl, ControlLaw::fixed(0), xi, s_low,
                                                         g_low);
        const RBSDESolution hi = solve_reflected_lattice(
            tl, ControlLaw::fixed(0), Vector(xi.array() + c0), s_high, g_high);
        CHECK(comparison_check(lo, hi) <= 1e-12);
    }
}

TEST_CASE("comparison_check rejects mismatched shapes") {
    const ProblemSpec spec = testing::random_spec(9);
    const Lattice a = testing::small_lattice(spec, -2.0, 2.0, 60);
    const Lattice b = testing::small_lattice(spec, -2.0, 2.0, 48);
    const RBSDESolution sa = solve_reflected_lattice(a, ControlLaw::fixed(0),
                                                     terminal_on_grid(spec, a.x_grid),
                                                     obstacle_of(spec));
    const RBSDESolution sb = solve_reflected_lattice(b, ControlLaw::fixed(0),
                                                     terminal_on_grid(spec, b.x_grid),
                                                     obstacle_of(spec));
    CHECK_THROWS_AS(comparison_check(sa, sb), ShapeMismatch);
}

TEST_CASE("terminal below the obstacle is rejected") {
    const ProblemSpec put = builtin_problem("american_put");
    const Lattice lat = put_lattice(put);
    const Vector bad = terminal_on_grid(put, lat.x_grid).array() - 1.0;
    CHECK_THROWS_AS(
        solve_reflected_lattice(lat, ControlLaw::fixed(0), bad, obstacle_of(put)),
        TerminalObstacleConflict);
}

TEST_CASE("MC solver: degenerate paths reduce to the sample mean") {
    ProblemSpec s = testing::random_spec(8);
    s.diffusion = [](double, const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 1)); };
    s.driver = [](double, const Vector&, double, const Vector&, const Vector&) { return 0.0; };
    s.obstacle = [](double, const Vector&) { return kInactiveObstacle; };
    const PathBundle b = simulate(s, SimControl::constant(Vector::Zero(1), 8), 0.0, vec1(0.4), 8,
                                  64, 13, 0.5);
    Vector tv(64);
    for (Index p = 0; p < 64; ++p) tv(p) = 1.0 + 0.01 * static_cast<double>(p);
    const RBSDESolution sol = solve_rbsde_mc(s, b, tv, 3);
    CHECK(sol.Y(0, 0) == doctest::Approx(tv.mean()).epsilon(1e-10));
    CHECK(sol.K.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("MC solver: constant obstacle pins the value") {
    const ProblemSpec co = builtin_problem("constant_obstacle", {{"c", 5.0}, {"T", 1.0}});
    const PathBundle b = simulate(co, SimControl::constant(Vector::Zero(1), 10), 0.0, vec1(0.0),
                                  10, 256, 21);
    const RBSDESolution sol = solve_rbsde_mc(co, b, Vector::Constant(256, 5.0), 3);
    // Constant fields survive the regression only up to solver roundoff.
    CHECK((sol.Y.array() - 5.0).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("MC american put within 1.5 percent of the binomial oracle") {
    const ProblemSpec put = builtin_problem("american_put");
    const PathBundle b = simulate(put, SimControl::constant(Vector::Zero(1), 50), 0.0,
                                  vec1(100.0), 50, 100000, 101);
    Vector tv(b.n_paths);
    for (Index p = 0; p < b.n_paths; ++p) tv(p) = put.terminal(b.state(p, 50));
    const RBSDESolution sol = solve_rbsde_mc(put, b, tv, 4);
    const double oracle = crr_american_put(100.0, 100.0, 0.05, 0.2, 1.0, 10000);
    CHECK(std::abs(sol.Y(0, 0) - oracle) / oracle <= 0.015);
    CHECK(flat_off_defect(sol) == 0.0);
    CHECK(min_reflection_increment(sol) >= 0.0);
}

TEST_CASE("a priori sides: constant obstacle hand values") {
    const ProblemSpec zero = builtin_problem("constant_obstacle", {{"c", 1e-300}, {"T", 1.0}});
    const Lattice lz = build_lattice(zero, 0.0, 1.0, 64, -4.0, 4.0, 32);
    const RBSDESolution sz = solve_reflected_lattice(lz, ControlLaw::fixed(0),
                                                     Vector::Constant(33, 1e-300),
                                                     obstacle_of(zero));
    const EstimateSides zero_sides = apriori_sides(lz, sz, ControlLaw::fixed(0), 0, 0.0, 200, 5);
    CHECK(zero_sides.lhs <= 1e-30);
    CHECK(zero_sides.rhs <= 1e-30);

    const ProblemSpec co = builtin_problem("constant_obstacle", {{"c", 5.0}, {"T", 1.0}});
    const Lattice lat = build_lattice(co, 0.0, 1.0, 64, -4.0, 4.0, 32);
    const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0),
                                                      Vector::Constant(33, 5.0), obstacle_of(co));
    const EstimateSides sides = apriori_sides(lat, sol, ControlLaw::fixed(0), 0, 0.0, 200, 5);
    CHECK(sides.lhs == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(sides.rhs == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("a priori ratio is scale-stable on the put") {
    auto sides_for = [](double lambda) {
        const ProblemSpec put = builtin_problem(
            "american_put", {{"S0", 100.0 * lambda}, {"K", 100.0 * lambda}});
        const Index nt = 400;
        const Lattice lat = build_lattice(put, 0.0, 1.0, nt, 20.0 * lambda, 300.0 * lambda, 80);
        const RBSDESolution sol = solve_reflected_lattice(lat, ControlLaw::fixed(0),
                                                          terminal_on_grid(put, lat.x_grid),
                                                          obstacle_of(put));
        return apriori_sides(lat, sol, ControlLaw::fixed(0), 0, 100.0 * lambda, 1000, 9);
    };
    const EstimateSides a = sides_for(1.0);
    const EstimateSides b = sides_for(10.0);
    const double ratio_a = a.lhs / a.rhs;
    const double ratio_b = b.lhs / b.rhs;
    CHECK(std::abs(ratio_b - ratio_a) / ratio_a <= 0.10);
}

TEST_CASE("stability sides: zero perturbation, exact terminal linearity, slope") {
    const ProblemSpec put = builtin_problem("american_put");
    const Lattice lat = put_lattice(put, 120);
    const Vector terminal = terminal_on_grid(put, lat.x_grid);
    const auto obstacle = obstacle_of(put);
    const RBSDESolution base = solve_reflected_lattice(lat, ControlLaw::fixed(0), terminal,
                                                       obstacle);

    const StabilitySides none = stability_sides(lat, base, base, nullptr, nullptr,
                                                ControlLaw::fixed(0), 0, 100.0, 1.0, 400, 3);
    CHECK(none.lhs == 0.0);

    // Terminal shift with inactive obstacle and zero driver: |dY| = eps.
    const ProblemSpec flat = builtin_problem(
        "inactive_obstacle", {{"S0", 100.0}, {"K", 100.0}, {"r", 0.0}, {"vol", 0.2}});
    const Lattice lat0 = put_lattice(flat, 120);
    const Vector term0 = terminal_on_grid(flat, lat0.x_grid);
    const auto h0 = obstacle_of(flat);
    const double eps = 1e-2;
    const RBSDESolution a = solve_reflected_lattice(lat0, ControlLaw::fixed(0), term0, h0);
    const RBSDESolution b = solve_reflected_lattice(lat0, ControlLaw::fixed(0),
                                                    Vector(term0.array() + eps), h0);
    CHECK(std::abs((b.Y - a.Y).cwiseAbs().maxCoeff() - eps) <= 1e-9);
    CHECK(std::abs((b.Y - a.Y).cwiseAbs().minCoeff() - eps) <= 1e-9);

    // Obstacle sweep: the sup-norm response is first order in the shift.
    double sxx = 0.0, sxy = 0.0, sx = 0.0, sy = 0.0;
    for (double e : {1e-1, 1e-2, 1e-3}) {
        const RBSDESolution pert = solve_reflected_lattice(
            lat, ControlLaw::fixed(0), terminal,
            [&put, e](double t, double x) { return put.obstacle1(t, x) - e; });
        const double lx = std::log10(e);
        const double ly = std::log10((base.Y - pert.Y).cwiseAbs().maxCoeff());
        sxx += lx * lx;
        sxy += lx * ly;
        sx += lx;
        sy += ly;
    }
    const double slope = (3.0 * sxy - sx * sy) / (3.0 * sxx - sx * sx);
    CHECK(slope >= 0.45);

    // Perturbation inequality with a generously fitted constant.
    const RBSDESolution pert = solve_reflected_lattice(
        lat, ControlLaw::fixed(0), terminal,
        [&put](double t, double x) { return put.obstacle1(t, x) - 0.1; });
    const EstimateSides ap = apriori_sides(lat, base, ControlLaw::fixed(0), 0, 100.0, 400, 3);
    const double fitted_c = 2.0 * ap.lhs / ap.rhs;
    const StabilitySides ss = stability_sides(lat, base, pert, nullptr, nullptr,
                                              ControlLaw::fixed(0), 0, 100.0, fitted_c, 400, 3);
    CHECK(ss.lhs <= ss.rhs);
}
