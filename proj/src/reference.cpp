#include "snell/reference.hpp"

#include <cmath>
#include <vector>

namespace snell {

namespace {

double crr_put(double spot, double strike, double rate, double vol, double maturity, int steps,
               bool american) {
    if (steps < 1 || spot <= 0.0 || strike <= 0.0 || vol <= 0.0 || maturity <= 0.0)
        throw InvalidParams("crr pricer: bad inputs");
    const double dt = maturity / steps;
    const double up = std::exp(vol * std::sqrt(dt));
    const double down = 1.0 / up;
    const double growth = std::exp(rate * dt);
    const double p = (growth - down) / (up - down);
    if (p <= 0.0 || p >= 1.0) throw InvalidParams("crr pricer: risk-neutral probability outside (0,1)");
    const double disc = 1.0 / growth;

    std::vector<double> value(static_cast<size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        const double s = spot * std::pow(up, steps - 2 * i);
        value[static_cast<size_t>(i)] = std::max(strike - s, 0.0);
    }
    for (int step = steps - 1; step >= 0; --step) {
        for (int i = 0; i <= step; ++i) {
            double cont = disc * (p * value[static_cast<size_t>(i)] +
                                  (1.0 - p) * value[static_cast<size_t>(i) + 1]);
            if (american) {
                const double s = spot * std::pow(up, step - 2 * i);
                cont = std::max(cont, strike - s);
            }
            value[static_cast<size_t>(i)] = cont;
        }
    }
    return value[0];
}

}  // namespace

double crr_american_put(double spot, double strike, double rate, double vol, double maturity,
                        int steps) {
    return crr_put(spot, strike, rate, vol, maturity, steps, true);
}

double crr_european_put(double spot, double strike, double rate, double vol, double maturity,
                        int steps) {
    return crr_put(spot, strike, rate, vol, maturity, steps, false);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double black_scholes_put(double spot, double strike, double rate, double vol, double maturity) {
    if (spot <= 0.0 || strike <= 0.0 || vol <= 0.0 || maturity <= 0.0)
        throw InvalidParams("black_scholes_put: bad inputs");
    const double sig_sqrt_t = vol * std::sqrt(maturity);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / sig_sqrt_t;
    const double d2 = d1 - sig_sqrt_t;
    return strike * std::exp(-rate * maturity) * normal_cdf(-d2) - spot * normal_cdf(-d1);
}

}  // namespace snell
