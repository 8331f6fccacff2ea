#include "snell/rbsde.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "snell/rng.hpp"

namespace snell {

namespace {

DriverFn1 driver_from_spec(const ProblemSpec& spec) {
    return [&spec](double t, double x, double y, const Vector& z, const Vector& v) {
        return spec.driver(t, vec1(x), y, z, v);
    };
}

Index resolve_control(const ControlLaw& law, Index i, Index j) {
    switch (law.mode) {
        case ControlLaw::Mode::fixed: return law.fixed_index;
        case ControlLaw::Mode::policy: return law.policy(i, j);
        default: throw InvalidParams("resolve_control: optimize law has no static index");
    }
}

/// One driver step at (i, j, m): conditional expectation of the next value
/// row, the martingale integrand from the kernel's increment covariance, and
/// the explicit driver increment.
void driver_step(const Lattice& lat, const DriverFn1& g, Index i, Index j, Index m,
                 const Vector& next, double& y_tilde, Vector& z_out) {
    const KernelRow k = lat.kernel(i, j, m);
    const double mid = next(k.j_mid);
    const double y_hat = mid + k.p_down * (next(k.j_down) - mid) + k.p_up * (next(k.j_up) - mid);

    const double x = lat.x_grid(j);
    // Z = E[Y dW]/dt realized through the chain increments dX - b dt = sigma dW.
    // Nominal branch increments (not clamped destinations) keep the boundary
    // rows' covariance bounded and constants exactly annihilated.
    const double a = k.sigma * k.sigma;
    if (a > 0.0) {
        const double dx = lat.dx();
        const double cov = k.p_down * next(k.j_down) * (-dx - k.drift_dt) +
                           k.p_mid * next(k.j_mid) * (-k.drift_dt) +
                           k.p_up * next(k.j_up) * (dx - k.drift_dt);
        z_out = k.sigma_row * (cov / (a * lat.dt()));
    } else {
        z_out = Vector::Zero(k.sigma_row.size());
    }

    const double gval = g(lat.t_grid(i), x, y_hat, z_out, lat.controls[static_cast<size_t>(m)]);
    if (!std::isfinite(gval))
        throw NonFiniteDriver("driver returned a non-finite value at (i=" + std::to_string(i) +
                              ", j=" + std::to_string(j) + ")");
    y_tilde = y_hat + gval * lat.dt();
}

enum class ObstacleHandling { project, penalize };

RBSDESolution backward_induction(const Lattice& lat, const ControlLaw& control,
                                 const Vector& terminal, const ObstacleFn1& obstacle,
                                 const DriverFn1& driver, ObstacleHandling handling,
                                 double n_penalty) {
    const Index nt = lat.nt(), nx = lat.nx();
    const Index d = lat.spec().brownian_dim;
    if (terminal.size() != nx + 1) throw ShapeMismatch("terminal field size mismatch");
    if (control.mode == ControlLaw::Mode::policy &&
        (control.policy.rows() != nt || control.policy.cols() != nx + 1))
        throw ShapeMismatch("policy table shape mismatch");

    const DriverFn1 g = driver ? driver : driver_from_spec(lat.spec());

    RBSDESolution sol;
    sol.mode = RBSDESolution::Mode::lattice;
    sol.z_dim = d;
    sol.Y.setZero(nt + 1, nx + 1);
    sol.Z.setZero(nt + 1, (nx + 1) * d);
    sol.K.setZero(nt + 1, nx + 1);
    sol.obstacle_S.setZero(nt + 1, nx + 1);
    sol.argmax.setZero(nt + 1, nx + 1);
    Matrix push(nt, nx + 1);  // reflection/penalty increments per step

    for (Index j = 0; j <= nx; ++j) {
        const double hT = obstacle(lat.t1(), lat.x_grid(j));
        if (terminal(j) < hT - 1e-12)
            throw TerminalObstacleConflict("terminal value below the obstacle at node " +
                                           std::to_string(j));
        sol.obstacle_S(nt, j) = hT;
        sol.Y(nt, j) = terminal(j);
    }

    Vector z(d);
    for (Index i = nt - 1; i >= 0; --i) {
        const Vector next = sol.Y.row(i + 1).transpose();
        for (Index j = 0; j <= nx; ++j) {
            double y_best;
            Index m_best;
            if (control.mode == ControlLaw::Mode::optimize) {
                y_best = -std::numeric_limits<double>::infinity();
                m_best = 0;
                Vector z_best(d);
                for (Index m = 0; m < lat.n_controls(); ++m) {
                    double y_m;
                    driver_step(lat, g, i, j, m, next, y_m, z);
                    if (y_m > y_best) {
                        y_best = y_m;
                        m_best = m;
                        z_best = z;
                    }
                }
                z = z_best;
            } else {
                m_best = resolve_control(control, i, j);
                if (m_best < 0 || m_best >= lat.n_controls())
                    throw IndexOutOfRange("control index out of range");
                driver_step(lat, g, i, j, m_best, next, y_best, z);
            }

            const double h = obstacle(lat.t_grid(i), lat.x_grid(j));
            double y;
            if (handling == ObstacleHandling::project) {
                y = std::max(y_best, h);
            } else if (y_best >= h) {
                y = y_best;
            } else {
                // Semi-implicit resolution of y = y_best + n dt (h - y)^+.
                y = (y_best + n_penalty * lat.dt() * h) / (1.0 + n_penalty * lat.dt());
            }
            sol.Y(i, j) = y;
            sol.Z.row(i).segment(j * d, d) = z.transpose();
            sol.obstacle_S(i, j) = h;
            sol.argmax(i, j) = static_cast<int>(m_best);
            push(i, j) = y - y_best;
        }
    }

    for (Index i = 0; i < nt; ++i)
        sol.K.row(i + 1) = sol.K.row(i) + push.row(i);
    return sol;
}

}  // namespace

RBSDESolution solve_reflected_lattice(const Lattice& lattice, const ControlLaw& control,
                                      const Vector& terminal, const ObstacleFn1& obstacle,
                                      const DriverFn1& driver) {
    return backward_induction(lattice, control, terminal, obstacle, driver,
                              ObstacleHandling::project, 0.0);
}

RBSDESolution solve_penalized_lattice(const Lattice& lattice, const ControlLaw& control,
                                      const Vector& terminal, const ObstacleFn1& obstacle,
                                      double n_penalty, const DriverFn1& driver) {
    if (n_penalty < 0.0) throw InvalidParams("solve_penalized_lattice: n_penalty must be >= 0");
    return backward_induction(lattice, control, terminal, obstacle, driver,
                              ObstacleHandling::penalize, n_penalty);
}

namespace {

/// Total-degree monomial exponents for n variables up to `degree`.
void enumerate_monomials(Index n, int degree, std::vector<std::vector<int>>& out,
                         std::vector<int>& current, int used, Index pos) {
    if (pos == n) {
        out.push_back(current);
        return;
    }
    for (int e = 0; e + used <= degree; ++e) {
        current[static_cast<size_t>(pos)] = e;
        enumerate_monomials(n, degree, out, current, used + e, pos + 1);
    }
}

Matrix design_matrix(const PathBundle& bundle, const std::vector<Index>& paths, Index step,
                     const std::vector<std::vector<int>>& monomials) {
    const Index n = bundle.state_dim;
    // Affine rescaling of each coordinate keeps the Gram matrix conditioned.
    Vector mean = Vector::Zero(n), scale = Vector::Ones(n);
    for (Index c = 0; c < n; ++c) {
        double mu = 0.0;
        for (Index p : paths) mu += bundle.states(p, step * n + c);
        mu /= static_cast<double>(paths.size());
        double var = 0.0;
        for (Index p : paths) {
            const double dev = bundle.states(p, step * n + c) - mu;
            var += dev * dev;
        }
        var /= static_cast<double>(paths.size());
        mean(c) = mu;
        scale(c) = var > 1e-14 ? std::sqrt(var) : 1.0;
    }

    Matrix phi(static_cast<Index>(paths.size()), static_cast<Index>(monomials.size()));
    for (Index r = 0; r < phi.rows(); ++r) {
        const Index p = paths[static_cast<size_t>(r)];
        for (Index b = 0; b < phi.cols(); ++b) {
            double term = 1.0;
            for (Index c = 0; c < n; ++c) {
                const int e = monomials[static_cast<size_t>(b)][static_cast<size_t>(c)];
                if (e > 0)
                    term *= std::pow((bundle.states(p, step * n + c) - mean(c)) / scale(c), e);
            }
            phi(r, b) = term;
        }
    }
    return phi;
}

Vector regress_fitted(const Matrix& phi, const Vector& target) {
    const Matrix gram = phi.transpose() * phi;
    const Vector rhs = phi.transpose() * target;
    const Vector coef = gram.completeOrthogonalDecomposition().solve(rhs);
    Vector fitted = phi * coef;
    if (!fitted.allFinite()) throw SingularRegression("regression produced non-finite values");
    return fitted;
}

}  // namespace

RBSDESolution solve_rbsde_mc(const ProblemSpec& spec, const PathBundle& bundle,
                             const Vector& terminal_values, int basis_degree,
                             const std::optional<Matrix>& fixed_control_path,
                             const std::optional<IntVector>& strata) {
    if (basis_degree < 1) throw InvalidParams("solve_rbsde_mc: basis_degree must be >= 1");
    const Index m_paths = bundle.n_paths, nt = bundle.n_steps;
    const Index d = bundle.brownian_dim;
    if (terminal_values.size() != m_paths) throw ShapeMismatch("terminal_values size mismatch");
    if (strata && strata->size() != m_paths) throw ShapeMismatch("strata size mismatch");
    if (fixed_control_path && fixed_control_path->rows() != nt)
        throw ShapeMismatch("fixed control path must have nt rows");

    const double dt = bundle.times(1) - bundle.times(0);

    std::vector<std::vector<int>> monomials;
    std::vector<int> scratch(static_cast<size_t>(bundle.state_dim), 0);
    enumerate_monomials(bundle.state_dim, basis_degree, monomials, scratch, 0, 0);

    // Group paths by stratum once; a single stratum is the common case.
    std::vector<std::vector<Index>> groups;
    if (strata) {
        const int max_label = strata->maxCoeff();
        groups.resize(static_cast<size_t>(max_label) + 1);
        for (Index p = 0; p < m_paths; ++p) groups[static_cast<size_t>((*strata)(p))].push_back(p);
    } else {
        groups.resize(1);
        groups[0].reserve(static_cast<size_t>(m_paths));
        for (Index p = 0; p < m_paths; ++p) groups[0].push_back(p);
    }

    RBSDESolution sol;
    sol.mode = RBSDESolution::Mode::mc;
    sol.z_dim = d;
    sol.Y.setZero(m_paths, nt + 1);
    sol.Z.setZero(m_paths, (nt + 1) * d);
    sol.K.setZero(m_paths, nt + 1);
    sol.obstacle_S.setZero(m_paths, nt + 1);

    const double t_end = bundle.times(nt);
    for (Index p = 0; p < m_paths; ++p) {
        const double hT = spec.obstacle(t_end, bundle.state(p, nt));
        if (terminal_values(p) < hT - 1e-12)
            throw TerminalObstacleConflict("terminal value below the obstacle on path " +
                                           std::to_string(p));
        sol.Y(p, nt) = terminal_values(p);
        sol.obstacle_S(p, nt) = hT;
    }

    // Realized value estimates carried path-by-path; regressions only supply
    // the conditional-expectation estimates for the driver step and the
    // stopping decision. Carrying projected fitted values instead compounds
    // the regression misfit through the projection at every step.
    Vector carried = terminal_values;
    Matrix push(m_paths, nt);
    for (Index i = nt - 1; i >= 0; --i) {
        const double t = bundle.times(i);
        for (const auto& group : groups) {
            if (group.empty()) continue;
            const Matrix phi = design_matrix(bundle, group, i, monomials);
            Vector next(static_cast<Index>(group.size()));
            for (Index r = 0; r < next.size(); ++r)
                next(r) = carried(group[static_cast<size_t>(r)]);
            const Vector y_hat = regress_fitted(phi, next);

            Matrix z_hat(static_cast<Index>(group.size()), d);
            for (Index c = 0; c < d; ++c) {
                Vector target(static_cast<Index>(group.size()));
                for (Index r = 0; r < target.size(); ++r) {
                    const Index p = group[static_cast<size_t>(r)];
                    target(r) = carried(p) * bundle.brownian(p, i * d + c) / dt;
                }
                z_hat.col(c) = regress_fitted(phi, target);
            }

            Vector h_vals(static_cast<Index>(group.size()));
            for (Index r = 0; r < h_vals.size(); ++r)
                h_vals(r) = spec.obstacle(t, bundle.state(group[static_cast<size_t>(r)], i));

            // Stopping decisions use a regression concentrated where the
            // obstacle can bind (paths strictly above its floor), falling
            // back to the full sample when that subset is too thin.
            const double h_floor = h_vals.minCoeff();
            std::vector<Index> biting;
            for (Index r = 0; r < h_vals.size(); ++r)
                if (h_vals(r) > h_floor + 1e-12 * (1.0 + std::abs(h_floor)))
                    biting.push_back(r);
            Vector y_decide = y_hat;
            if (static_cast<Index>(biting.size()) >= 5 * static_cast<Index>(monomials.size())) {
                std::vector<Index> sub_paths;
                Vector sub_target(static_cast<Index>(biting.size()));
                for (size_t k = 0; k < biting.size(); ++k) {
                    sub_paths.push_back(group[static_cast<size_t>(biting[k])]);
                    sub_target(static_cast<Index>(k)) = next(biting[k]);
                }
                const Matrix sub_phi = design_matrix(bundle, sub_paths, i, monomials);
                const Vector sub_fit = regress_fitted(sub_phi, sub_target);
                for (size_t k = 0; k < biting.size(); ++k) y_decide(biting[k]) = sub_fit(static_cast<Index>(k));
            }

            for (Index r = 0; r < static_cast<Index>(group.size()); ++r) {
                const Index p = group[static_cast<size_t>(r)];
                const Vector x = bundle.state(p, i);
                const Vector v = fixed_control_path
                                     ? Vector(fixed_control_path->row(i).transpose())
                                     : bundle.control(p, i);
                const Vector z = z_hat.row(r).transpose();
                const double gval = spec.driver(t, x, y_hat(r), z, v);
                if (!std::isfinite(gval))
                    throw NonFiniteDriver("driver non-finite on path " + std::to_string(p));
                const double y_tilde = y_hat(r) + gval * dt;
                const double h = h_vals(r);
                const double y = std::max(y_tilde, h);
                sol.Y(p, i) = y;
                sol.Z.row(p).segment(i * d, d) = z.transpose();
                sol.obstacle_S(p, i) = h;
                push(p, i) = y - y_tilde;
                // Paths sitting at the obstacle floor never stop when an
                // off-region exists (the floor encodes "obstacle off" there);
                // with a flat obstacle every path may stop by comparison.
                const bool at_floor = h <= h_floor + 1e-12 * (1.0 + std::abs(h_floor));
                const bool stop = (biting.empty() || !at_floor) && h >= y_decide(r) + gval * dt;
                carried(p) = stop ? h : carried(p) + gval * dt;
            }
        }
    }

    for (Index i = 0; i < nt; ++i) sol.K.col(i + 1) = sol.K.col(i) + push.col(i);
    return sol;
}

double comparison_check(const RBSDESolution& sol_low, const RBSDESolution& sol_high) {
    if (sol_low.Y.rows() != sol_high.Y.rows() || sol_low.Y.cols() != sol_high.Y.cols() ||
        sol_low.mode != sol_high.mode)
        throw ShapeMismatch("comparison_check: solutions have different shapes");
    return (sol_low.Y - sol_high.Y).cwiseMax(0.0).maxCoeff();
}

double flat_off_defect(const RBSDESolution& sol) {
    double acc = 0.0;
    if (sol.mode == RBSDESolution::Mode::lattice) {
        for (Index i = 0; i + 1 < sol.Y.rows(); ++i)
            for (Index j = 0; j < sol.Y.cols(); ++j)
                acc += (sol.Y(i, j) - sol.obstacle_S(i, j)) * sol.dk_lattice(i, j);
    } else {
        for (Index p = 0; p < sol.Y.rows(); ++p)
            for (Index i = 0; i + 1 < sol.Y.cols(); ++i)
                acc += (sol.Y(p, i) - sol.obstacle_S(p, i)) * sol.dk(p, i);
    }
    return acc;
}

double min_reflection_increment(const RBSDESolution& sol) {
    double mn = std::numeric_limits<double>::infinity();
    if (sol.mode == RBSDESolution::Mode::lattice) {
        for (Index i = 0; i + 1 < sol.Y.rows(); ++i)
            for (Index j = 0; j < sol.Y.cols(); ++j) mn = std::min(mn, sol.dk_lattice(i, j));
    } else {
        for (Index p = 0; p < sol.Y.rows(); ++p)
            for (Index i = 0; i + 1 < sol.Y.cols(); ++i) mn = std::min(mn, sol.dk(p, i));
    }
    return mn;
}

namespace {

Index nearest_node(const Lattice& lat, double x) {
    Index best = 0;
    double dist = std::abs(lat.x_grid(0) - x);
    for (Index j = 1; j <= lat.nx(); ++j) {
        const double d = std::abs(lat.x_grid(j) - x);
        if (d < dist) {
            dist = d;
            best = j;
        }
    }
    return best;
}

Index chain_control(const ControlLaw& law, const RBSDESolution& sol, Index i, Index j) {
    if (law.mode == ControlLaw::Mode::optimize) return sol.argmax(i, j);
    return resolve_control(law, i, j);
}

}  // namespace

EstimateSides apriori_sides(const Lattice& lattice, const RBSDESolution& sol,
                            const ControlLaw& control, Index t_index, double start_x,
                            Index chain_paths, std::uint64_t seed) {
    if (sol.mode != RBSDESolution::Mode::lattice)
        throw InvalidParams("apriori_sides: lattice-mode solution required");
    const Index nt = lattice.nt();
    const Index d = sol.z_dim;
    const CounterRng rng(seed);
    const DriverFn1 g = driver_from_spec(lattice.spec());

    double lhs = 0.0, rhs = 0.0;
    for (Index p = 0; p < chain_paths; ++p) {
        Index j = nearest_node(lattice, start_x);
        double sup_y2 = 0.0, sum_z2 = 0.0, k_tail = 0.0, sum_g0 = 0.0, sup_s2 = 0.0;
        double xi = 0.0;
        for (Index i = 0; i <= nt; ++i) {
            if (i >= t_index) {
                sup_y2 = std::max(sup_y2, sol.Y(i, j) * sol.Y(i, j));
                sup_s2 = std::max(sup_s2, sol.obstacle_S(i, j) * sol.obstacle_S(i, j));
                if (i == nt) xi = sol.Y(i, j);
            }
            if (i == nt) break;
            const Index m = chain_control(control, sol, i, j);
            if (i >= t_index) {
                sum_z2 += sol.z_at(i, j).squaredNorm() * lattice.dt();
                k_tail += sol.dk_lattice(i, j);
                sum_g0 += std::abs(g(lattice.t_grid(i), lattice.x_grid(j), 0.0, Vector::Zero(d),
                                     lattice.controls[static_cast<size_t>(m)])) *
                          lattice.dt();
            }
            const KernelRow k = lattice.kernel(i, j, m);
            const double u = rng.uniform(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(i));
            j = u < k.p_down ? k.j_down : (u < k.p_down + k.p_mid ? k.j_mid : k.j_up);
        }
        lhs += sup_y2 + sum_z2 + k_tail * k_tail;
        rhs += xi * xi + sum_g0 * sum_g0 + sup_s2;
    }
    const double inv = 1.0 / static_cast<double>(chain_paths);
    return {lhs * inv, rhs * inv};
}

StabilitySides stability_sides(const Lattice& lattice, const RBSDESolution& sol,
                               const RBSDESolution& sol_pert, const DriverFn1& driver,
                               const DriverFn1& driver_pert, const ControlLaw& control,
                               Index t_index, double start_x, double fitted_c, Index chain_paths,
                               std::uint64_t seed) {
    if (sol.Y.rows() != sol_pert.Y.rows() || sol.Y.cols() != sol_pert.Y.cols())
        throw ShapeMismatch("stability_sides: solutions have different shapes");
    const Index nt = lattice.nt();
    const Index d = sol.z_dim;
    const CounterRng rng(seed);
    const DriverFn1 g = driver ? driver : driver_from_spec(lattice.spec());
    const DriverFn1 gp = driver_pert ? driver_pert : driver_from_spec(lattice.spec());

    double lhs = 0.0, data_term = 0.0, psi = 0.0, sup_ds2_mean = 0.0;
    for (Index p = 0; p < chain_paths; ++p) {
        Index j = nearest_node(lattice, start_x);
        double sup_dy2 = 0.0, sum_dz2 = 0.0, dk_tail = 0.0, sum_dg = 0.0, sup_ds2 = 0.0;
        double sup_s2 = 0.0, sup_sp2 = 0.0, sum_g0 = 0.0, sum_g0p = 0.0;
        double dxi = 0.0, xi = 0.0, xip = 0.0;
        for (Index i = 0; i <= nt; ++i) {
            if (i >= t_index) {
                const double dy = sol.Y(i, j) - sol_pert.Y(i, j);
                sup_dy2 = std::max(sup_dy2, dy * dy);
                const double ds = sol.obstacle_S(i, j) - sol_pert.obstacle_S(i, j);
                sup_ds2 = std::max(sup_ds2, ds * ds);
                sup_s2 = std::max(sup_s2, sol.obstacle_S(i, j) * sol.obstacle_S(i, j));
                sup_sp2 = std::max(sup_sp2, sol_pert.obstacle_S(i, j) * sol_pert.obstacle_S(i, j));
                if (i == nt) {
                    dxi = sol.Y(i, j) - sol_pert.Y(i, j);
                    xi = sol.Y(i, j);
                    xip = sol_pert.Y(i, j);
                }
            }
            if (i == nt) break;
            const Index m = chain_control(control, sol, i, j);
            const double t = lattice.t_grid(i);
            const double x = lattice.x_grid(j);
            const Vector& v = lattice.controls[static_cast<size_t>(m)];
            if (i >= t_index) {
                sum_dz2 += (sol.z_at(i, j) - sol_pert.z_at(i, j)).squaredNorm() * lattice.dt();
                dk_tail += sol.dk_lattice(i, j) - sol_pert.dk_lattice(i, j);
                const Vector z = sol.z_at(i, j);
                sum_dg += std::abs(g(t, x, sol.Y(i, j), z, v) - gp(t, x, sol.Y(i, j), z, v)) *
                          lattice.dt();
                sum_g0 += std::abs(g(t, x, 0.0, Vector::Zero(d), v)) * lattice.dt();
                sum_g0p += std::abs(gp(t, x, 0.0, Vector::Zero(d), v)) * lattice.dt();
            }
            const KernelRow k = lattice.kernel(i, j, m);
            const double u = rng.uniform(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(i));
            j = u < k.p_down ? k.j_down : (u < k.p_down + k.p_mid ? k.j_mid : k.j_up);
        }
        lhs += sup_dy2 + sum_dz2 + dk_tail * dk_tail;
        data_term += dxi * dxi + sum_dg * sum_dg;
        psi += xi * xi + sum_g0 * sum_g0 + sup_s2 + xip * xip + sum_g0p * sum_g0p + sup_sp2;
        sup_ds2_mean += sup_ds2;
    }
    const double inv = 1.0 / static_cast<double>(chain_paths);
    StabilitySides s;
    s.lhs = lhs * inv;
    s.data_term = data_term * inv;
    s.psi = psi * inv;
    s.obstacle_term = std::sqrt(sup_ds2_mean * inv) * std::sqrt(s.psi);
    s.rhs = fitted_c * s.data_term + fitted_c * s.obstacle_term;
    return s;
}

}  // namespace snell
