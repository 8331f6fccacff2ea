#include "snell/forward_sim.hpp"

#include <cmath>
#include <string>

#include "snell/rng.hpp"

namespace snell {

PathBundle simulate(const ProblemSpec& spec, const SimControl& control, double t0,
                    const Vector& x0, Index nt, Index m_paths, std::uint64_t seed, double t1) {
    if (m_paths < 1) throw InvalidParams("simulate: m_paths must be >= 1");
    if (x0.size() != spec.state_dim) throw InvalidParams("simulate: x0 has wrong dimension");
    Matrix states0(m_paths, spec.state_dim);
    states0.rowwise() = x0.transpose();
    return simulate_from(spec, control, t0, states0, nt, seed, t1);
}

PathBundle simulate_from(const ProblemSpec& spec, const SimControl& control, double t0,
                         const Matrix& states0, Index nt, std::uint64_t seed, double t1) {
    const Index m_paths = states0.rows();
    if (nt < 1 || m_paths < 1) throw InvalidParams("simulate: nt and m_paths must be >= 1");
    if (states0.cols() != spec.state_dim) throw InvalidParams("simulate: x0 has wrong dimension");
    if (t1 < 0.0) t1 = spec.horizon;
    if (!(t0 < t1)) throw InvalidParams("simulate: empty time window");
    if (!control.policy && control.fixed_path.rows() != nt)
        throw InvalidParams("simulate: fixed control path must have nt rows");

    const Index n = spec.state_dim, d = spec.brownian_dim, k = spec.control_dim;
    const double dt = (t1 - t0) / static_cast<double>(nt);
    const double sqrt_dt = std::sqrt(dt);
    const CounterRng rng(seed);

    PathBundle b;
    b.times = Vector::LinSpaced(nt + 1, t0, t1);
    b.states.resize(m_paths, (nt + 1) * n);
    b.brownian.resize(m_paths, nt * d);
    b.controls_used.resize(m_paths, nt * k);
    b.seed = seed;
    b.n_paths = m_paths;
    b.n_steps = nt;
    b.state_dim = n;
    b.brownian_dim = d;
    b.control_dim = k;

    for (Index p = 0; p < m_paths; ++p) {
        Vector x = states0.row(p).transpose();
        b.states.row(p).segment(0, n) = x.transpose();
        for (Index i = 0; i < nt; ++i) {
            const double t = b.times(i);
            const Vector v = control.policy ? control.policy(t, x)
                                            : Vector(control.fixed_path.row(i).transpose());
            Vector dw(d);
            for (Index c = 0; c < d; ++c)
                dw(c) = sqrt_dt * rng.gaussian(static_cast<std::uint64_t>(p),
                                               static_cast<std::uint64_t>(i),
                                               static_cast<std::uint64_t>(c));
            x = x + spec.drift(t, x, v) * dt + spec.diffusion(t, x, v) * dw;
            if (!x.allFinite())
                throw NonFiniteState("simulate: path " + std::to_string(p) + " diverged at step " +
                                     std::to_string(i));
            b.states.row(p).segment((i + 1) * n, n) = x.transpose();
            b.brownian.row(p).segment(i * d, d) = dw.transpose();
            b.controls_used.row(p).segment(i * k, k) = v.transpose();
        }
    }
    return b;
}

double moment_check(const PathBundle& bundle, const Vector& x0, double delta) {
    if (delta <= 0.0) throw InvalidParams("moment_check: delta must be positive");
    const double t_end = bundle.times(0) + delta;
    double acc = 0.0;
    for (Index p = 0; p < bundle.n_paths; ++p) {
        double sup2 = 0.0;
        for (Index i = 0; i <= bundle.n_steps; ++i) {
            if (bundle.times(i) > t_end + 1e-12) break;
            sup2 = std::max(sup2, (bundle.state(p, i) - x0).squaredNorm());
        }
        acc += sup2;
    }
    return acc / static_cast<double>(bundle.n_paths) / delta;
}

double displacement_ratio(const ProblemSpec& spec, const SimControl& control, const Vector& x0a,
                          const Vector& x0b, double t0, Index nt, Index m_paths,
                          std::uint64_t seed) {
    const double dz2 = (x0a - x0b).squaredNorm();
    if (dz2 <= 0.0) throw InvalidParams("displacement_ratio: identical initial points");
    const PathBundle a = simulate(spec, control, t0, x0a, nt, m_paths, seed);
    const PathBundle b = simulate(spec, control, t0, x0b, nt, m_paths, seed);
    double acc = 0.0;
    for (Index p = 0; p < m_paths; ++p) {
        double sup2 = 0.0;
        for (Index i = 0; i <= nt; ++i)
            sup2 = std::max(sup2, (a.state(p, i) - b.state(p, i)).squaredNorm());
        acc += sup2;
    }
    return acc / static_cast<double>(m_paths) / dz2;
}

}  // namespace snell
