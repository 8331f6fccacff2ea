#include "snell/problem.hpp"

#include <algorithm>
#include <cmath>

#include "snell/rng.hpp"

namespace snell {

ControlSet ControlSet::finite(std::vector<Vector> pts) {
    ControlSet s;
    s.kind = Kind::finite;
    s.points = std::move(pts);
    return s;
}

ControlSet ControlSet::box(Vector lo, Vector hi, int per_axis) {
    if (lo.size() != hi.size() || lo.size() == 0) throw InvalidParams("control box: bad bounds");
    if ((hi - lo).minCoeff() < 0.0) throw InvalidParams("control box: hi < lo");
    if (per_axis < 2) throw InvalidParams("control box: per_axis must be >= 2");
    ControlSet s;
    s.kind = Kind::box;
    s.lo = std::move(lo);
    s.hi = std::move(hi);
    s.per_axis = per_axis;
    return s;
}

std::vector<Vector> ControlSet::grid(int per_axis_override) const {
    if (kind == Kind::finite) return points;
    const int count = per_axis_override > 0 ? per_axis_override : per_axis;
    const Index k = lo.size();
    // Tensor grid over the box; k is small (typically 1).
    std::vector<Vector> out;
    std::vector<int> idx(static_cast<size_t>(k), 0);
    while (true) {
        Vector v(k);
        for (Index a = 0; a < k; ++a)
            v(a) = lo(a) + (hi(a) - lo(a)) * idx[static_cast<size_t>(a)] / (count - 1);
        out.push_back(v);
        Index a = 0;
        for (; a < k; ++a) {
            if (++idx[static_cast<size_t>(a)] < count) break;
            idx[static_cast<size_t>(a)] = 0;
        }
        if (a == k) break;
    }
    return out;
}

bool ControlSet::empty() const {
    return kind == Kind::finite ? points.empty() : lo.size() == 0;
}

Index ControlSet::dim() const {
    if (kind == Kind::finite) return points.empty() ? 0 : points.front().size();
    return lo.size();
}

namespace {

void check_finite(double value, const char* what) {
    if (!std::isfinite(value)) throw NonFiniteCoefficient(std::string(what) + " returned a non-finite value");
}

Vector random_box_point(const CounterRng& rng, Index n, double halfwidth,
                        std::uint64_t stream, std::uint64_t probe) {
    Vector x(n);
    for (Index i = 0; i < n; ++i)
        x(i) = rng.uniform_range(-halfwidth, halfwidth, stream, probe, static_cast<std::uint64_t>(i));
    return x;
}

Vector random_control(const CounterRng& rng, const ControlSet& controls,
                      std::uint64_t stream, std::uint64_t probe) {
    if (controls.kind == ControlSet::Kind::finite) {
        const auto& pts = controls.points;
        auto pick = static_cast<size_t>(rng.uniform(stream, probe) * static_cast<double>(pts.size()));
        if (pick >= pts.size()) pick = pts.size() - 1;
        return pts[pick];
    }
    Vector v(controls.lo.size());
    for (Index i = 0; i < v.size(); ++i)
        v(i) = rng.uniform_range(controls.lo(i), controls.hi(i), stream, probe,
                                 static_cast<std::uint64_t>(i));
    return v;
}

}  // namespace

AssumptionReport validate_spec(const ProblemSpec& spec, int probes, std::uint64_t seed,
                               double probe_halfwidth) {
    if (probes < 1) throw InvalidParams("validate_spec: probes must be >= 1");
    if (spec.controls.empty()) throw InvalidParams("validate_spec: empty control set");

    const CounterRng rng(seed);
    const Index n = spec.state_dim;
    const Index d = spec.brownian_dim;

    AssumptionReport report;
    auto& maxq = report.max_observed_lipschitz;
    maxq = {{"b", 0.0}, {"sigma", 0.0}, {"g", 0.0}, {"phi", 0.0}, {"h", 0.0}};
    const double bound = spec.lipschitz_L * (1.0 + 1e-6);
    const double denom_floor = 1e-9;

    auto record = [&](const std::string& coeff, double q, double t, const Vector& x, const Vector& v) {
        double& cur = maxq[coeff];
        if (q > cur) cur = q;
        if (q > bound) report.violation_points.push_back({t, x, v, coeff});
    };

    for (int p = 0; p < probes; ++p) {
        const auto pi = static_cast<std::uint64_t>(p);
        const double t = rng.uniform_range(0.0, spec.horizon, 1, pi);
        const Vector x = random_box_point(rng, n, probe_halfwidth, 2, pi);
        const Vector xp = random_box_point(rng, n, probe_halfwidth, 3, pi);
        const Vector v = random_control(rng, spec.controls, 4, pi);
        const Vector vp = random_control(rng, spec.controls, 5, pi);
        const double y = rng.uniform_range(-probe_halfwidth, probe_halfwidth, 6, pi);
        const double yp = rng.uniform_range(-probe_halfwidth, probe_halfwidth, 7, pi);
        const Vector z = random_box_point(rng, d, probe_halfwidth, 8, pi);
        const Vector zp = random_box_point(rng, d, probe_halfwidth, 9, pi);

        const double dxv = (x - xp).norm() + (v - vp).norm();

        const Vector b0 = spec.drift(t, x, v);
        const Vector b1 = spec.drift(t, xp, vp);
        check_finite(b0.sum() + b1.sum(), "drift");
        if (dxv > denom_floor) record("b", (b0 - b1).norm() / dxv, t, x, v);

        const Matrix s0 = spec.diffusion(t, x, v);
        const Matrix s1 = spec.diffusion(t, xp, vp);
        check_finite(s0.sum() + s1.sum(), "diffusion");
        if (dxv > denom_floor) record("sigma", (s0 - s1).norm() / dxv, t, x, v);

        const double g0 = spec.driver(t, x, y, z, v);
        const double g1 = spec.driver(t, xp, yp, zp, vp);
        check_finite(g0 + g1, "driver");
        const double dg = dxv + std::abs(y - yp) + (z - zp).norm();
        if (dg > denom_floor) record("g", std::abs(g0 - g1) / dg, t, x, v);

        const double f0 = spec.terminal(x);
        const double f1 = spec.terminal(xp);
        check_finite(f0 + f1, "terminal");
        const double dx = (x - xp).norm();
        if (dx > denom_floor) record("phi", std::abs(f0 - f1) / dx, t, x, v);

        const double h0 = spec.obstacle(t, x);
        const double h1 = spec.obstacle(t, xp);
        check_finite(h0 + h1, "obstacle");
        if (dx > denom_floor) record("h", std::abs(h0 - h1) / dx, t, x, v);

        // Terminal consistency: the terminal value must dominate the obstacle
        // at the horizon, otherwise the reflected terminal condition is
        // contradictory.
        const double hT0 = spec.obstacle(spec.horizon, x);
        const double hT1 = spec.obstacle(spec.horizon, xp);
        check_finite(hT0 + hT1, "obstacle");
        if (f0 < hT0 - 1e-12 || f1 < hT1 - 1e-12) {
            report.terminal_consistent = false;
            report.violation_points.push_back({spec.horizon, f0 < hT0 - 1e-12 ? x : xp, v, "terminal"});
        }
    }

    bool quotients_ok = true;
    for (const auto& [coeff, q] : maxq) quotients_ok = quotients_ok && q <= bound;
    report.passed = quotients_ok && report.terminal_consistent;
    return report;
}

namespace {

double take(const std::map<std::string, double>& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

void reject_unknown(const std::map<std::string, double>& params,
                    std::initializer_list<const char*> known) {
    for (const auto& [key, value] : params) {
        (void)value;
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw InvalidParams("unknown parameter '" + key + "'");
    }
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0)) throw InvalidParams(std::string(what) + " must be positive");
}

ProblemSpec put_dynamics(double r, double vol, double T) {
    ProblemSpec s;
    s.state_dim = s.brownian_dim = s.control_dim = 1;
    s.drift = [r](double, const Vector& x, const Vector&) { return Vector(r * x); };
    s.diffusion = [vol](double, const Vector& x, const Vector&) {
        Matrix m(1, 1);
        m(0, 0) = vol * x(0);
        return m;
    };
    s.driver = [r](double, const Vector&, double y, const Vector&, const Vector&) { return -r * y; };
    s.controls = ControlSet::finite({Vector::Zero(1)});
    s.horizon = T;
    // Declared constant covers the sampled quotients on the default probe box
    // with an order-of-magnitude margin.
    s.lipschitz_L = std::max({r, vol, 1.0}) * 11.0;
    return s;
}

}  // namespace

ProblemSpec builtin_problem(const std::string& name, const std::map<std::string, double>& params) {
    if (name == "american_put" || name == "inactive_obstacle" || name == "nonlinear_driver_put") {
        reject_unknown(params, {"S0", "K", "r", "vol", "T", "lambda"});
        const double S0 = take(params, "S0", 100.0);
        const double K = take(params, "K", 100.0);
        const double r = take(params, "r", 0.05);
        const double vol = take(params, "vol", 0.2);
        const double T = take(params, "T", 1.0);
        require_positive(S0, "S0");
        require_positive(K, "K");
        require_positive(vol, "vol");
        require_positive(T, "T");
        if (r < 0.0) throw InvalidParams("r must be nonnegative");

        ProblemSpec s = put_dynamics(r, vol, T);
        s.terminal = [K](const Vector& x) { return std::max(K - x(0), 0.0); };
        s.initial_state = vec1(S0);
        if (name == "american_put") {
            s.obstacle = [K](double, const Vector& x) { return std::max(K - x(0), 0.0); };
            s.name = "american_put";
        } else if (name == "inactive_obstacle") {
            if (params.count("lambda")) throw InvalidParams("unknown parameter 'lambda'");
            s.obstacle = [](double, const Vector&) { return kInactiveObstacle; };
            s.name = "inactive_obstacle";
        } else {
            const double lambda = take(params, "lambda", 0.1);
            if (lambda < 0.0) throw InvalidParams("lambda must be nonnegative");
            s.driver = [r, lambda](double, const Vector&, double y, const Vector& z, const Vector&) {
                return -r * y - lambda * z.lpNorm<1>();
            };
            s.obstacle = [K](double, const Vector& x) { return std::max(K - x(0), 0.0); };
            s.lipschitz_L = std::max({r, vol, 1.0, lambda}) * 11.0;
            s.name = "nonlinear_driver_put";
        }
        return s;
    }

    if (name == "controlled_drift") {
        reject_unknown(params, {"vmax", "T"});
        const double vmax = take(params, "vmax", 1.0);
        const double T = take(params, "T", 1.0);
        require_positive(vmax, "vmax");
        require_positive(T, "T");
        ProblemSpec s;
        s.state_dim = s.brownian_dim = s.control_dim = 1;
        s.drift = [](double, const Vector&, const Vector& v) { return v; };
        s.diffusion = [](double, const Vector&, const Vector&) {
            Matrix m(1, 1);
            m(0, 0) = 1.0;
            return m;
        };
        s.driver = [](double, const Vector&, double, const Vector&, const Vector&) { return 0.0; };
        s.terminal = [](const Vector& x) { return x(0); };
        s.obstacle = [](double, const Vector&) { return kInactiveObstacle; };
        s.controls = ControlSet::box(vec1(-vmax), vec1(vmax));
        s.horizon = T;
        s.lipschitz_L = 1.0;
        s.initial_state = vec1(0.0);
        s.name = "controlled_drift";
        return s;
    }

    if (name == "constant_obstacle") {
        reject_unknown(params, {"c", "T"});
        const double c = take(params, "c", 5.0);
        const double T = take(params, "T", 1.0);
        require_positive(T, "T");
        ProblemSpec s;
        s.state_dim = s.brownian_dim = s.control_dim = 1;
        s.drift = [](double, const Vector& x, const Vector&) { return Vector(Vector::Zero(x.size())); };
        s.diffusion = [](double, const Vector&, const Vector&) {
            Matrix m(1, 1);
            m(0, 0) = 1.0;
            return m;
        };
        s.driver = [](double, const Vector&, double, const Vector&, const Vector&) { return 0.0; };
        s.terminal = [c](const Vector&) { return c; };
        s.obstacle = [c](double, const Vector&) { return c; };
        s.controls = ControlSet::finite({Vector::Zero(1)});
        s.horizon = T;
        s.lipschitz_L = 1.0;
        s.initial_state = vec1(0.0);
        s.name = "constant_obstacle";
        return s;
    }

    throw UnknownProblem("no builtin problem named '" + name + "'");
}

std::vector<std::string> builtin_problem_names() {
    return {"american_put", "controlled_drift", "constant_obstacle", "inactive_obstacle",
            "nonlinear_driver_put"};
}

}  // namespace snell
