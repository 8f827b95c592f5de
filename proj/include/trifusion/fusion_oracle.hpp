#pragma once

#include <cstdint>

namespace trifusion {

// Error model of a convex combination x_hat = alpha * x + (1 - alpha) * g of
// a noisy, possibly attacked observation x = x* + n_L + a and a prior
// estimate g = x* + b + n_P. All quantities are total energies over the
// vector, not per-component variances.

struct OracleParams {
    double sigma_l2 = 0.0;  ///< E||n_L||^2
    double a_norm2 = 0.0;   ///< ||a||^2, adversarial offset
    double sigma_p2 = 0.0;  ///< E||n_P||^2
    double b_norm2 = 0.0;   ///< ||b||^2, prior bias
};

struct EffectiveErrors {
    double v_x;  ///< sigma_L^2 + ||a||^2
    double v_p;  ///< sigma_P^2 + ||b||^2
};

/// InputError on any negative or non-finite field.
EffectiveErrors effective_errors(const OracleParams& p);

/// alpha^2 V_x + (1 - alpha)^2 V_P; InputError unless 0 <= alpha <= 1.
double error_at_alpha(double v_x, double v_p, double alpha);

struct OptimalAlpha {
    double alpha;
    double error_min;
};

/// alpha* = V_P / (V_x + V_P), Error_min = V_x V_P / (V_x + V_P).
/// DegenerateError when V_x + V_P == 0.
OptimalAlpha optimal_alpha(double v_x, double v_p);

/// Error_min < V_x. Holds for every V_x > 0 and finite V_P >= 0.
bool improvement_holds(double v_x, double v_p);

struct MonteCarloResult {
    double mean;            ///< average ||x_hat - x*||^2 over trials
    double standard_error;  ///< sample std / sqrt(trials)
    double predicted;       ///< error_at_alpha on the effective errors
};

/// Simulates the estimator in `dim` dimensions. a and b are fixed vectors
/// along different coordinate axes (the closed form has no a.b cross term),
/// noise components are i.i.d. N(0, sigma^2 / dim). Needs trials >= 1000
/// and dim >= 2 when both a and b are nonzero; InputError otherwise.
MonteCarloResult monte_carlo_validate(const OracleParams& p, double alpha, std::size_t dim, std::size_t trials,
                                      std::uint64_t seed);

}  // namespace trifusion
