#include "snell/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace snell {

namespace {

struct RawKernel {
    double p_down, p_mid, p_up;
    double drift_dt, sigma2_dt;
};

RawKernel raw_kernel(double b, double a, double dt, double dx) {
    const double bdt = b * dt;
    const double second = a * dt + bdt * bdt;  // E[(dX)^2] target
    const double dx2 = dx * dx;
    double pu = 0.5 * (second + bdt * dx) / dx2;
    double pd = 0.5 * (second - bdt * dx) / dx2;
    return {pd, 1.0 - pu - pd, pu, bdt, a * dt};
}

void validate_kernel(const RawKernel& k, Index i, Index j, Index m) {
    const double tol = 1e-12;
    if (!(k.p_down >= -tol && k.p_up >= -tol && k.p_mid >= -tol)) {
        throw CFLViolation("lattice kernel has a negative probability at (i=" + std::to_string(i) +
                           ", j=" + std::to_string(j) + ", m=" + std::to_string(m) +
                           "); refine dt or widen dx");
    }
    if (!std::isfinite(k.p_down + k.p_mid + k.p_up))
        throw NonFiniteCoefficient("lattice kernel non-finite at (i=" + std::to_string(i) +
                                   ", j=" + std::to_string(j) + ", m=" + std::to_string(m) + ")");
}

}  // namespace

KernelRow Lattice::kernel(Index i, Index j, Index m) const {
    if (i < 0 || i >= nt() || j < 0 || j > nx() || m < 0 || m >= n_controls())
        throw IndexOutOfRange("lattice kernel index out of range");
    const double t = t_grid(i);
    const double x = x_grid(j);
    const Vector& v = controls[static_cast<size_t>(m)];
    const double b = spec_.drift1(t, x, v);
    Vector srow = spec_.sigma_row1(t, x, v);
    const double a = srow.squaredNorm();

    RawKernel raw = raw_kernel(b, a, dt_, dx_);
    validate_kernel(raw, i, j, m);

    KernelRow row;
    row.p_down = std::max(raw.p_down, 0.0);
    row.p_up = std::max(raw.p_up, 0.0);
    row.p_mid = 1.0 - row.p_down - row.p_up;
    row.j_down = std::max<Index>(j - 1, 0);
    row.j_mid = j;
    row.j_up = std::min<Index>(j + 1, nx());
    row.drift_dt = raw.drift_dt;
    row.sigma = std::sqrt(a);
    row.sigma_row = std::move(srow);
    return row;
}

Lattice build_lattice(const ProblemSpec& spec, double t0, double t1, Index nt, double x_lo,
                      double x_hi, Index nx, int control_grid_count) {
    if (spec.state_dim != 1) throw InvalidParams("build_lattice: requires state_dim == 1");
    if (!(x_hi > x_lo)) throw DegenerateDomain("build_lattice: x_hi <= x_lo");
    if (nx < 4) throw InvalidParams("build_lattice: nx must be >= 4");
    if (nt < 1) throw InvalidParams("build_lattice: nt must be >= 1");
    if (!(t0 < t1)) throw InvalidParams("build_lattice: t0 must precede t1");
    if (t1 > spec.horizon + 1e-12) throw InvalidParams("build_lattice: window exceeds the horizon");

    Lattice lat;
    lat.spec_ = spec;
    lat.dt_ = (t1 - t0) / static_cast<double>(nt);
    lat.dx_ = (x_hi - x_lo) / static_cast<double>(nx);
    lat.t_grid = Vector::LinSpaced(nt + 1, t0, t1);
    lat.x_grid = Vector::LinSpaced(nx + 1, x_lo, x_hi);
    lat.controls = spec.controls.grid(control_grid_count);
    if (lat.controls.empty()) throw InvalidParams("build_lattice: empty control set");

    // One full scan validates CFL feasibility and nonnegativity up front.
    for (Index i = 0; i < nt; ++i) {
        for (Index j = 0; j <= nx; ++j) {
            for (Index m = 0; m < lat.n_controls(); ++m) {
                const double t = lat.t_grid(i);
                const double x = lat.x_grid(j);
                const Vector& v = lat.controls[static_cast<size_t>(m)];
                const double b = spec.drift1(t, x, v);
                const double a = spec.sigma_row1(t, x, v).squaredNorm();
                if (!std::isfinite(b) || !std::isfinite(a))
                    throw NonFiniteCoefficient("build_lattice: coefficient non-finite at node " +
                                               std::to_string(j));
                const double cfl = a * lat.dt_ / (lat.dx_ * lat.dx_) + std::abs(b) * lat.dt_ / lat.dx_;
                if (cfl > 1.0 + 1e-12)
                    throw CFLViolation("build_lattice: CFL bound exceeded at (i=" + std::to_string(i) +
                                       ", j=" + std::to_string(j) + ", m=" + std::to_string(m) +
                                       "), value " + std::to_string(cfl) + "; refine dt or widen dx");
                validate_kernel(raw_kernel(b, a, lat.dt_, lat.dx_), i, j, m);
            }
        }
    }
    return lat;
}

double expectation(const Lattice& lattice, Index i, Index j, Index m, const Vector& field) {
    if (field.size() != lattice.nx() + 1)
        throw IndexOutOfRange("expectation: field size does not match the state grid");
    const KernelRow k = lattice.kernel(i, j, m);
    const double mid = field(k.j_mid);
    return mid + k.p_down * (field(k.j_down) - mid) + k.p_up * (field(k.j_up) - mid);
}

Index cfl_feasible_nt(const ProblemSpec& spec, double t0, double t1, double x_lo, double x_hi,
                      Index nx, Index nt_floor, int control_grid_count, Index round_to) {
    if (!(x_hi > x_lo)) throw DegenerateDomain("cfl_feasible_nt: x_hi <= x_lo");
    const double dx = (x_hi - x_lo) / static_cast<double>(nx);
    const auto controls = spec.controls.grid(control_grid_count);
    // Coefficients are continuous in t; a moderately fine time sample captures
    // the worst case for the coefficient families used here.
    const Index t_samples = std::max<Index>(nt_floor, 64);
    double rate = 0.0;
    for (Index s = 0; s <= t_samples; ++s) {
        const double t = t0 + (t1 - t0) * static_cast<double>(s) / static_cast<double>(t_samples);
        for (Index j = 0; j <= nx; ++j) {
            const double x = x_lo + dx * static_cast<double>(j);
            for (const auto& v : controls) {
                const double b = spec.drift1(t, x, v);
                const double a = spec.sigma_row1(t, x, v).squaredNorm();
                rate = std::max(rate, a / (dx * dx) + std::abs(b) / dx);
            }
        }
    }
    const double dt_max = rate > 0.0 ? 0.999 / rate : (t1 - t0);
    Index nt = std::max(nt_floor, static_cast<Index>(std::ceil((t1 - t0) / dt_max)));
    if (round_to > 1 && nt % round_to != 0) nt += round_to - nt % round_to;
    return nt;
}

}  // namespace snell
