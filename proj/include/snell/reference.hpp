#pragma once

#include "snell/types.hpp"

namespace snell {

// Reference pricers kept independent of the lattice/FD/MC solvers: a
// Cox-Ross-Rubinstein recombining tree on the price itself and the
// closed-form lognormal formula. They serve as oracles for the benchmark
// problems.

/// CRR binomial American put with `steps` time steps.
double crr_american_put(double spot, double strike, double rate, double vol, double maturity,
                        int steps);

/// CRR binomial European put (no early exercise), used to cross-check the
/// tree against the closed form.
double crr_european_put(double spot, double strike, double rate, double vol, double maturity,
                        int steps);

/// Standard normal CDF via erfc.
double normal_cdf(double x);

/// Black-Scholes European put.
double black_scholes_put(double spot, double strike, double rate, double vol, double maturity);

}  // namespace snell
