#include "snell/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "snell/rbsde.hpp"

namespace snell {

namespace {

void check_uniform(const Vector& grid, const char* what) {
    if (grid.size() < 2) throw InvalidParams(std::string(what) + ": need at least two points");
    const double step = grid(1) - grid(0);
    if (!(step > 0.0)) throw DegenerateDomain(std::string(what) + ": non-increasing grid");
    for (Index i = 1; i + 1 < grid.size(); ++i)
        if (std::abs(grid(i + 1) - grid(i) - step) > 1e-9 * (1.0 + std::abs(step)))
            throw InvalidParams(std::string(what) + ": grid must be uniform");
}

enum class ObstacleHandling { project, penalize };

ValueField hjb_sweep(const ProblemSpec& spec, const Vector& t_grid, const Vector& x_grid,
                     int control_grid_count, ObstacleHandling handling, double n_penalty) {
    if (spec.state_dim != 1) throw InvalidParams("solve_hjb_fd: requires state_dim == 1");
    check_uniform(t_grid, "t_grid");
    check_uniform(x_grid, "x_grid");

    const Index nt = t_grid.size() - 1, nx = x_grid.size() - 1;
    const double dt = t_grid(1) - t_grid(0);
    const double dx = x_grid(1) - x_grid(0);
    const auto controls = spec.controls.grid(control_grid_count);
    if (controls.empty()) throw InvalidParams("solve_hjb_fd: empty control set");

    // CFL scan for the explicit monotone stencil.
    for (Index i = 0; i < nt; ++i) {
        for (Index j = 0; j <= nx; ++j) {
            for (const auto& v : controls) {
                const double b = spec.drift1(t_grid(i), x_grid(j), v);
                const double a = spec.sigma_row1(t_grid(i), x_grid(j), v).squaredNorm();
                const double cfl = a * dt / (dx * dx) + std::abs(b) * dt / (2.0 * dx);
                if (cfl > 0.5 + 1e-12)
                    throw CFLViolation("solve_hjb_fd: CFL bound exceeded at (i=" +
                                       std::to_string(i) + ", j=" + std::to_string(j) +
                                       "), value " + std::to_string(cfl));
            }
        }
    }

    ValueField f;
    f.t_grid = t_grid;
    f.x_grid = x_grid;
    f.u.setZero(nt + 1, nx + 1);
    f.h_field.setZero(nt + 1, nx + 1);
    f.active.setZero(nt + 1, nx + 1);
    f.argmax_control.setZero(nt + 1, nx + 1);

    for (Index j = 0; j <= nx; ++j) {
        f.u(nt, j) = spec.terminal1(x_grid(j));
        f.h_field(nt, j) = spec.obstacle1(t_grid(nt), x_grid(j));
        f.active(nt, j) = std::abs(f.u(nt, j) - f.h_field(nt, j)) <= 1e-10 ? 1 : 0;
    }

    for (Index i = nt - 1; i >= 0; --i) {
        const double t = t_grid(i);
        for (Index j = 0; j <= nx; ++j) {
            const double x = x_grid(j);
            const double u_mid = f.u(i + 1, j);
            // One-sided gradient and vanishing curvature at the edges
            // (linear extrapolation, consistent with linear growth).
            double d2, d1;
            if (j == 0) {
                d2 = 0.0;
                d1 = (f.u(i + 1, 1) - f.u(i + 1, 0)) / dx;
            } else if (j == nx) {
                d2 = 0.0;
                d1 = (f.u(i + 1, nx) - f.u(i + 1, nx - 1)) / dx;
            } else {
                d2 = (f.u(i + 1, j + 1) - 2.0 * u_mid + f.u(i + 1, j - 1)) / (dx * dx);
                d1 = (f.u(i + 1, j + 1) - f.u(i + 1, j - 1)) / (2.0 * dx);
            }

            double best = -std::numeric_limits<double>::infinity();
            int best_m = 0;
            for (size_t m = 0; m < controls.size(); ++m) {
                const Vector& v = controls[m];
                const double b = spec.drift1(t, x, v);
                const Vector srow = spec.sigma_row1(t, x, v);
                const double a = srow.squaredNorm();
                const Vector z = srow * d1;
                const double g = spec.driver1(t, x, u_mid, z, v);
                if (!std::isfinite(g)) throw NonFiniteDriver("driver non-finite in HJB sweep");
                const double cand = u_mid + dt * (0.5 * a * d2 + b * d1 + g);
                if (cand > best) {
                    best = cand;
                    best_m = static_cast<int>(m);
                }
            }

            const double h = spec.obstacle1(t, x);
            double val;
            if (handling == ObstacleHandling::project) {
                val = std::max(best, h);
            } else if (best >= h) {
                val = best;
            } else {
                val = (best + n_penalty * dt * h) / (1.0 + n_penalty * dt);
            }
            if (!std::isfinite(val))
                throw NonFiniteValue("HJB value non-finite at (i=" + std::to_string(i) + ", j=" +
                                     std::to_string(j) + ")");
            f.u(i, j) = val;
            f.h_field(i, j) = h;
            f.active(i, j) = std::abs(val - h) <= 1e-10 ? 1 : 0;
            f.argmax_control(i, j) = best_m;
        }
    }
    return f;
}

}  // namespace

double ValueField::at(double t, double x) const {
    const Index i = time_index(t);
    if (x <= x_grid(0)) return u(i, 0);
    if (x >= x_grid(nx())) return u(i, nx());
    const double s = (x - x_grid(0)) / dx();
    const Index j = std::min<Index>(static_cast<Index>(s), nx() - 1);
    const double w = s - static_cast<double>(j);
    return (1.0 - w) * u(i, j) + w * u(i, j + 1);
}

double ValueField::at_quadratic(double t, double x) const {
    const Index i = time_index(t);
    const double s = (x - x_grid(0)) / dx();
    Index j = static_cast<Index>(std::llround(s));
    j = std::clamp<Index>(j, 1, nx() - 1);
    const double x0 = x_grid(j - 1), x1 = x_grid(j), x2 = x_grid(j + 1);
    const double y0 = u(i, j - 1), y1 = u(i, j), y2 = u(i, j + 1);
    return y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)) +
           y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)) +
           y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
}

Index ValueField::time_index(double t) const {
    const double s = (t - t_grid(0)) / dt();
    const Index i = static_cast<Index>(std::llround(s));
    if (i < 0 || i > nt() || std::abs(t_grid(i) - t) > 1e-9 * (1.0 + std::abs(t)))
        throw MisalignedWindow("time " + std::to_string(t) + " is not on the field's grid");
    return i;
}

ValueField solve_hjb_fd(const ProblemSpec& spec, const Vector& t_grid, const Vector& x_grid,
                        int control_grid_count) {
    return hjb_sweep(spec, t_grid, x_grid, control_grid_count, ObstacleHandling::project, 0.0);
}

ValueField solve_penalized_hjb(const ProblemSpec& spec, const Vector& t_grid, const Vector& x_grid,
                               double n_penalty, int control_grid_count) {
    if (n_penalty < 0.0) throw InvalidParams("solve_penalized_hjb: n_penalty must be >= 0");
    return hjb_sweep(spec, t_grid, x_grid, control_grid_count, ObstacleHandling::penalize,
                     n_penalty);
}

double residual_check(const ValueField& field, const ProblemSpec& spec, int control_grid_count,
                      double terminal_buffer) {
    const Index nt = field.nt(), nx = field.nx();
    const double dt = field.dt(), dx = field.dx();
    const auto controls = spec.controls.grid(control_grid_count);
    const Index i_end = std::min<Index>(nt, static_cast<Index>(std::ceil((1.0 - terminal_buffer) *
                                                                         static_cast<double>(nt))));
    double worst = 0.0;
    for (Index i = 0; i < i_end; ++i) {
        const double t = field.t_grid(i);
        for (Index j = 1; j < nx; ++j) {
            const double x = field.x_grid(j);
            const double du_dt = (field.u(i + 1, j) - field.u(i, j)) / dt;
            const double d2 = (field.u(i, j + 1) - 2.0 * field.u(i, j) + field.u(i, j - 1)) / (dx * dx);
            const double d1 = (field.u(i, j + 1) - field.u(i, j - 1)) / (2.0 * dx);
            double sup = -std::numeric_limits<double>::infinity();
            for (const auto& v : controls) {
                const double b = spec.drift1(t, x, v);
                const Vector srow = spec.sigma_row1(t, x, v);
                const double a = srow.squaredNorm();
                const double g = spec.driver1(t, x, field.u(i, j), Vector(srow * d1), v);
                sup = std::max(sup, 0.5 * a * d2 + b * d1 + g);
            }
            const double r = std::min(field.u(i, j) - field.h_field(i, j), -du_dt - sup);
            worst = std::max(worst, std::abs(r));
        }
    }
    return worst;
}

Index hjb_feasible_nt(const ProblemSpec& spec, double t0, double t1, double x_lo, double x_hi,
                      Index nx, Index nt_floor, int control_grid_count, Index round_to) {
    if (!(x_hi > x_lo)) throw DegenerateDomain("hjb_feasible_nt: x_hi <= x_lo");
    const double dx = (x_hi - x_lo) / static_cast<double>(nx);
    const auto controls = spec.controls.grid(control_grid_count);
    const Index t_samples = std::max<Index>(nt_floor, 64);
    double rate = 0.0;
    for (Index s = 0; s <= t_samples; ++s) {
        const double t = t0 + (t1 - t0) * static_cast<double>(s) / static_cast<double>(t_samples);
        for (Index j = 0; j <= nx; ++j) {
            const double x = x_lo + dx * static_cast<double>(j);
            for (const auto& v : controls) {
                const double b = spec.drift1(t, x, v);
                const double a = spec.sigma_row1(t, x, v).squaredNorm();
                rate = std::max(rate, a / (dx * dx) + std::abs(b) / (2.0 * dx));
            }
        }
    }
    const double dt_max = rate > 0.0 ? 0.4995 / rate : (t1 - t0);
    Index nt = std::max(nt_floor, static_cast<Index>(std::ceil((t1 - t0) / dt_max)));
    if (round_to > 1 && nt % round_to != 0) nt += round_to - nt % round_to;
    return nt;
}

ValueField to_value_field(const Lattice& lattice, const RBSDESolution& sol) {
    if (sol.mode != RBSDESolution::Mode::lattice)
        throw InvalidParams("to_value_field: lattice-mode solution required");
    ValueField f;
    f.t_grid = lattice.t_grid;
    f.x_grid = lattice.x_grid;
    f.u = sol.Y;
    f.h_field = sol.obstacle_S;
    f.argmax_control = sol.argmax;
    f.active.setZero(sol.Y.rows(), sol.Y.cols());
    for (Index i = 0; i < sol.Y.rows(); ++i)
        for (Index j = 0; j < sol.Y.cols(); ++j)
            f.active(i, j) = std::abs(sol.Y(i, j) - sol.obstacle_S(i, j)) <= 1e-10 ? 1 : 0;
    return f;
}

}  // namespace snell
