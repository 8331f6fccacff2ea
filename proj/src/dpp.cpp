#include "snell/dpp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "snell/rng.hpp"

namespace snell {

double semigroup_eval(const SemigroupQuery& query, const Lattice& window) {
    if (std::abs(window.t0() - query.t) > 1e-9 * (1.0 + std::abs(query.t)) ||
        std::abs(window.t1() - (query.t + query.delta)) > 1e-9 * (1.0 + std::abs(query.t)))
        throw WindowMismatch("semigroup_eval: lattice does not span [t, t+delta]");
    const auto& spec = window.spec();
    const RBSDESolution sol = solve_reflected_lattice(
        window, query.control, query.terminal_field,
        [&spec](double t, double x) { return spec.obstacle1(t, x); });
    // Linear interpolation of the first row at the query state.
    const Vector& xs = window.x_grid;
    if (query.x <= xs(0)) return sol.Y(0, 0);
    if (query.x >= xs(window.nx())) return sol.Y(0, window.nx());
    const double s = (query.x - xs(0)) / window.dx();
    const Index j = std::min<Index>(static_cast<Index>(s), window.nx() - 1);
    const double w = s - static_cast<double>(j);
    return (1.0 - w) * sol.Y(0, j) + w * sol.Y(0, j + 1);
}

DPPReport dpp_check(const ProblemSpec& spec, const ValueField& u_field, double delta,
                    const std::vector<std::pair<double, double>>& sample_points,
                    int control_grid_count) {
    const double dt = u_field.dt();
    const auto steps = static_cast<Index>(std::llround(delta / dt));
    if (steps < 1 || std::abs(delta - static_cast<double>(steps) * dt) > 1e-9 * (1.0 + delta))
        throw MisalignedWindow("dpp_check: delta is not a multiple of the field's time step");

    DPPReport report;
    report.sample_points = sample_points;
    report.window_steps = steps;
    report.nx = u_field.nx();
    const auto n = static_cast<Index>(sample_points.size());
    report.lhs.resize(n);
    report.rhs_frozen.resize(n);
    report.rhs_policy.resize(n);

    // Group the sample points by time so each window is solved once.
    std::map<Index, std::vector<Index>> by_time;
    for (Index q = 0; q < n; ++q)
        by_time[u_field.time_index(sample_points[static_cast<size_t>(q)].first)].push_back(q);

    const auto controls = spec.controls.grid(control_grid_count);
    for (const auto& [ti, queries] : by_time) {
        if (ti + steps > u_field.nt())
            throw MisalignedWindow("dpp_check: window extends past the horizon");
        const double t = u_field.t_grid(ti);
        const Lattice window =
            build_lattice(spec, t, t + delta, steps, u_field.x_grid(0),
                          u_field.x_grid(u_field.nx()), u_field.nx(), control_grid_count);
        const Vector terminal = u_field.u.row(ti + steps).transpose();

        SemigroupQuery query;
        query.t = t;
        query.delta = delta;
        query.terminal_field = terminal;

        for (Index q : queries) {
            const double x = sample_points[static_cast<size_t>(q)].second;
            query.x = x;
            query.control = ControlLaw::optimize();
            report.rhs_policy(q) = semigroup_eval(query, window);
            if (controls.size() == 1) {
                // One control: the frozen sup and the per-node sup coincide.
                report.rhs_frozen(q) = report.rhs_policy(q);
            } else {
                double frozen = -std::numeric_limits<double>::infinity();
                for (Index m = 0; m < static_cast<Index>(controls.size()); ++m) {
                    query.control = ControlLaw::fixed(m);
                    frozen = std::max(frozen, semigroup_eval(query, window));
                }
                report.rhs_frozen(q) = frozen;
            }
            report.lhs(q) = u_field.at(t, x);
        }
    }

    report.max_abs_gap_frozen = (report.lhs - report.rhs_frozen).cwiseAbs().maxCoeff();
    report.max_abs_gap_policy = (report.lhs - report.rhs_policy).cwiseAbs().maxCoeff();
    return report;
}

namespace {

PathBundle splice_bundles(const PathBundle& a, const PathBundle& b,
                          const std::vector<bool>& take_a) {
    PathBundle out = a;
    for (Index p = 0; p < a.n_paths; ++p) {
        if (!take_a[static_cast<size_t>(p)]) {
            out.states.row(p) = b.states.row(p);
            out.brownian.row(p) = b.brownian.row(p);
            out.controls_used.row(p) = b.controls_used.row(p);
        }
    }
    return out;
}

}  // namespace

double partition_concat_check(const ProblemSpec& spec, double t, double x, const Vector& v1,
                              const Vector& v2, std::uint64_t seed, Index m_paths, Index nt_pre,
                              Index nt_post, int basis_degree, PartitionEvent event) {
    if (!(t > 0.0 && t < spec.horizon))
        throw InvalidParams("partition_concat_check: t must lie inside (0, T)");
    if (nt_pre % 2 != 0) ++nt_pre;

    // Realize the partition from the pre-t history: A = {W_{t/2} >= 0}.
    const PathBundle pre =
        simulate(spec, SimControl::constant(v1, nt_pre), 0.0, vec1(x), nt_pre, m_paths, seed, t);
    std::vector<bool> in_a(static_cast<size_t>(m_paths));
    for (Index p = 0; p < m_paths; ++p) {
        if (event == PartitionEvent::full_space) {
            in_a[static_cast<size_t>(p)] = true;
            continue;
        }
        double w_half = 0.0;
        for (Index i = 0; i < nt_pre / 2; ++i) w_half += pre.brownian(p, i * pre.brownian_dim);
        in_a[static_cast<size_t>(p)] = w_half >= 0.0;
    }
    Matrix states_t(m_paths, spec.state_dim);
    for (Index p = 0; p < m_paths; ++p) states_t.row(p) = pre.state(p, nt_pre).transpose();

    // Common increments on [t, T] come from a fresh counter stream shared by
    // all three continuations.
    const std::uint64_t seed_post = mix64(seed ^ 0x5bf03635ULL);
    const PathBundle b1 = simulate_from(spec, SimControl::constant(v1, nt_post), t, states_t,
                                        nt_post, seed_post, spec.horizon);
    const PathBundle b2 = simulate_from(spec, SimControl::constant(v2, nt_post), t, states_t,
                                        nt_post, seed_post, spec.horizon);
    const PathBundle bc = splice_bundles(b1, b2, in_a);

    auto terminal_of = [&spec](const PathBundle& b) {
        Vector tv(b.n_paths);
        for (Index p = 0; p < b.n_paths; ++p) tv(p) = spec.terminal(b.state(p, b.n_steps));
        return tv;
    };

    const RBSDESolution s1 = solve_rbsde_mc(spec, b1, terminal_of(b1), basis_degree);
    const RBSDESolution s2 = solve_rbsde_mc(spec, b2, terminal_of(b2), basis_degree);

    // Stratify the concatenated solve by control branch; identical branches
    // collapse to a single stratum so the degenerate cases match bit-for-bit.
    std::optional<IntVector> strata;
    const bool same_branch = v1.size() == v2.size() && (v1.array() == v2.array()).all();
    if (!same_branch) {
        IntVector labels(m_paths);
        for (Index p = 0; p < m_paths; ++p) labels(p) = in_a[static_cast<size_t>(p)] ? 0 : 1;
        strata = labels;
    }
    const RBSDESolution sc = solve_rbsde_mc(spec, bc, terminal_of(bc), basis_degree, std::nullopt,
                                            strata);

    double worst = 0.0;
    for (Index p = 0; p < m_paths; ++p) {
        const double split = in_a[static_cast<size_t>(p)] ? s1.Y(p, 0) : s2.Y(p, 0);
        worst = std::max(worst, std::abs(sc.Y(p, 0) - split));
    }
    return worst;
}

double mixed_bruteforce(const Lattice& tree, Index start_node, const ObstacleFn1& obstacle,
                        const Vector& terminal) {
    const Index nt = tree.nt(), nx = tree.nx();
    const Index n_controls = tree.n_controls();
    if (start_node < 0 || start_node > nx) throw IndexOutOfRange("mixed_bruteforce: start node");
    if (n_controls > 3) throw ExplosionGuard("mixed_bruteforce: more than 3 controls");

    // The driver must not feed back through (y, z) so each fixed pair is a
    // plain expectation; probe a few points.
    const auto& spec = tree.spec();
    const Index d = spec.brownian_dim;
    for (double probe_x : {tree.x_grid(0), tree.x_grid(nx / 2)}) {
        const double g0 = spec.driver1(tree.t0(), probe_x, 0.0, Vector::Zero(d),
                                       tree.controls.front());
        const double g1 = spec.driver1(tree.t0(), probe_x, 1.0, Vector::Ones(d),
                                       tree.controls.front());
        if (std::abs(g0 - g1) > 1e-12 * (1.0 + std::abs(g0)))
            throw InvalidParams("mixed_bruteforce: driver must not depend on (y, z)");
    }

    // Decision nodes: reachable (i, j) with i < nt through positive-probability
    // edges under any control.
    std::vector<std::vector<char>> reach(static_cast<size_t>(nt + 1),
                                         std::vector<char>(static_cast<size_t>(nx + 1), 0));
    reach[0][static_cast<size_t>(start_node)] = 1;
    std::vector<std::pair<Index, Index>> decisions;
    for (Index i = 0; i < nt; ++i) {
        for (Index j = 0; j <= nx; ++j) {
            if (!reach[static_cast<size_t>(i)][static_cast<size_t>(j)]) continue;
            decisions.emplace_back(i, j);
            for (Index m = 0; m < n_controls; ++m) {
                const KernelRow k = tree.kernel(i, j, m);
                if (k.p_down > 1e-15) reach[static_cast<size_t>(i + 1)][static_cast<size_t>(k.j_down)] = 1;
                if (k.p_mid > 1e-15) reach[static_cast<size_t>(i + 1)][static_cast<size_t>(k.j_mid)] = 1;
                if (k.p_up > 1e-15) reach[static_cast<size_t>(i + 1)][static_cast<size_t>(k.j_up)] = 1;
            }
        }
    }
    const auto n_nodes = static_cast<Index>(decisions.size());
    if (n_nodes > 6)
        throw ExplosionGuard("mixed_bruteforce: " + std::to_string(n_nodes) +
                             " decision nodes exceed the enumeration cap of 6");

    IntMatrix node_id = IntMatrix::Constant(nt, nx + 1, -1);
    for (Index id = 0; id < n_nodes; ++id)
        node_id(decisions[static_cast<size_t>(id)].first,
                decisions[static_cast<size_t>(id)].second) = static_cast<int>(id);

    std::uint64_t n_assignments = 1;
    for (Index i = 0; i < n_nodes; ++i) n_assignments *= static_cast<std::uint64_t>(n_controls);
    const std::uint64_t n_regions = 1ULL << n_nodes;

    const double dt = tree.dt();
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> assign(static_cast<size_t>(n_nodes), 0);

    for (std::uint64_t a = 0; a < n_assignments; ++a) {
        std::uint64_t code = a;
        for (Index id = 0; id < n_nodes; ++id) {
            assign[static_cast<size_t>(id)] = static_cast<int>(code % static_cast<std::uint64_t>(n_controls));
            code /= static_cast<std::uint64_t>(n_controls);
        }
        for (std::uint64_t region = 0; region < n_regions; ++region) {
            Vector prob = Vector::Zero(nx + 1);
            prob(start_node) = 1.0;
            double payoff = 0.0;
            for (Index i = 0; i < nt; ++i) {
                Vector next = Vector::Zero(nx + 1);
                for (Index j = 0; j <= nx; ++j) {
                    const double pj = prob(j);
                    if (pj == 0.0) continue;
                    const int id = node_id(i, j);
                    if (region & (1ULL << id)) {
                        payoff += pj * obstacle(tree.t_grid(i), tree.x_grid(j));
                        continue;
                    }
                    const Index m = assign[static_cast<size_t>(id)];
                    payoff += pj * spec.driver1(tree.t_grid(i), tree.x_grid(j), 0.0,
                                                Vector::Zero(d),
                                                tree.controls[static_cast<size_t>(m)]) * dt;
                    const KernelRow k = tree.kernel(i, j, m);
                    next(k.j_down) += pj * k.p_down;
                    next(k.j_mid) += pj * k.p_mid;
                    next(k.j_up) += pj * k.p_up;
                }
                prob = next;
            }
            for (Index j = 0; j <= nx; ++j)
                if (prob(j) != 0.0) payoff += prob(j) * terminal(j);
            best = std::max(best, payoff);
        }
    }
    return best;
}

TreeCase random_tree_case(std::uint64_t seed) {
    TreeCase tc;
    const Index nt = tc.nt;

    // Hash-tabulated coefficients: values are read back at grid points only.
    auto table = [seed](std::uint64_t tag, Index i, Index j, Index m) {
        const std::uint64_t h = mix64(mix64(mix64(mix64(seed ^ tag) ^ static_cast<std::uint64_t>(i)) ^
                                            static_cast<std::uint64_t>(j)) ^
                                      static_cast<std::uint64_t>(m));
        return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;  // in [-1, 1)
    };

    ProblemSpec s;
    s.state_dim = s.brownian_dim = s.control_dim = 1;
    s.drift = [](double, const Vector& x, const Vector&) { return Vector(Vector::Zero(x.size())); };
    s.diffusion = [](double, const Vector&, const Vector&) {
        Matrix m(1, 1);
        m(0, 0) = 1.0;
        return m;
    };
    // dt = dx^2/sigma^2 = 1 collapses the middle branch exactly.
    s.horizon = static_cast<double>(nt);
    s.controls = ControlSet::finite({Vector::Zero(1), Vector::Ones(1)});
    s.lipschitz_L = 10.0;
    s.initial_state = vec1(3.0);
    s.driver = [table](double t, const Vector& x, double, const Vector&, const Vector& v) {
        const Index i = static_cast<Index>(std::llround(t));
        const Index j = static_cast<Index>(std::llround(x(0)));
        const Index m = static_cast<Index>(std::llround(v(0)));
        return table(101, i, j, m);
    };
    s.terminal = [table](const Vector& x) {
        const Index j = static_cast<Index>(std::llround(x(0)));
        return 1.0 + table(202, 0, j, 0);  // in [0, 2)
    };
    s.obstacle = [table, nt](double t, const Vector& x) {
        const Index i = static_cast<Index>(std::llround(t));
        const Index j = static_cast<Index>(std::llround(x(0)));
        if (i >= nt) {
            // Keep the terminal condition admissible: h(T, x) <= terminal(x).
            const double phi = 1.0 + table(202, 0, j, 0);
            return phi - 0.25 * (table(303, i, j, 0) + 1.0);
        }
        return table(303, i, j, 0);
    };
    s.name = "random_tree";
    tc.spec = std::move(s);
    return tc;
}

RegularityRecord regularity_check(const ValueField& u_field) {
    RegularityRecord rec;
    const Index nt = u_field.nt(), nx = u_field.nx();
    const double dx = u_field.dx(), dt = u_field.dt();
    for (Index i = 0; i <= nt; ++i) {
        for (Index j = 0; j <= nx; ++j) {
            const double x = u_field.x_grid(j);
            rec.growth_ratio = std::max(rec.growth_ratio,
                                        std::abs(u_field.u(i, j)) / (1.0 + std::abs(x)));
            if (j < nx) {
                const double du = std::abs(u_field.u(i, j + 1) - u_field.u(i, j));
                const double denom =
                    dx * dx + (1.0 + std::abs(x) + std::abs(u_field.x_grid(j + 1))) * dx;
                rec.lip_x_ratio = std::max(rec.lip_x_ratio, du * du / denom);
            }
            if (i < nt) {
                const double du = std::abs(u_field.u(i + 1, j) - u_field.u(i, j));
                const double dh = std::abs(u_field.h_field(i, j) - u_field.h_field(i + 1, j));
                const double net = std::max(du - 3.0 * dh, 0.0);
                rec.holder_t_ratio = std::max(rec.holder_t_ratio, net / std::sqrt(dt));
            }
        }
    }
    return rec;
}

}  // namespace snell
