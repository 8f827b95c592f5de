#include "trifusion/fusion_oracle.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "trifusion/error.hpp"
#include "trifusion/random.hpp"

namespace trifusion {

namespace {

void require_energy(double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw InputError(std::string(name) + " must be finite and non-negative, got " + std::to_string(v));
    }
}

}  // namespace

EffectiveErrors effective_errors(const OracleParams& p) {
    require_energy(p.sigma_l2, "sigma_L^2");
    require_energy(p.a_norm2, "||a||^2");
    require_energy(p.sigma_p2, "sigma_P^2");
    require_energy(p.b_norm2, "||b||^2");
    return {p.sigma_l2 + p.a_norm2, p.sigma_p2 + p.b_norm2};
}

double error_at_alpha(double v_x, double v_p, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw InputError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    return alpha * alpha * v_x + (1.0 - alpha) * (1.0 - alpha) * v_p;
}

OptimalAlpha optimal_alpha(double v_x, double v_p) {
    const double total = v_x + v_p;
    if (total == 0.0) {
        throw DegenerateError("optimal_alpha: V_x + V_P is zero, every alpha is optimal");
    }
    return {v_p / total, v_x * v_p / total};
}

bool improvement_holds(double v_x, double v_p) { return optimal_alpha(v_x, v_p).error_min < v_x; }

MonteCarloResult monte_carlo_validate(const OracleParams& p, double alpha, std::size_t dim, std::size_t trials,
                                      std::uint64_t seed) {
    const auto ve = effective_errors(p);
    const double predicted = error_at_alpha(ve.v_x, ve.v_p, alpha);
    if (trials < 1000) {
        throw InputError("monte_carlo_validate needs at least 1000 trials, got " + std::to_string(trials));
    }
    if (dim == 0) {
        throw InputError("monte_carlo_validate: dim must be positive");
    }
    if (dim < 2 && p.a_norm2 > 0.0 && p.b_norm2 > 0.0) {
        throw InputError("monte_carlo_validate: orthogonal a and b need dim >= 2");
    }
    std::vector<double> a(dim, 0.0), b(dim, 0.0);
    a[0] = std::sqrt(p.a_norm2);
    b[dim > 1 ? 1 : 0] = std::sqrt(p.b_norm2);
    const double sd_l = std::sqrt(p.sigma_l2 / static_cast<double>(dim));
    const double sd_p = std::sqrt(p.sigma_p2 / static_cast<double>(dim));

    Rng rng(seed, StreamPurpose::monte_carlo);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        double err = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            // x_hat - x* = alpha (n_L + a) + (1 - alpha) (b + n_P)
            const double dx = sd_l * rng.normal() + a[i];
            const double dg = sd_p * rng.normal() + b[i];
            const double e = alpha * dx + (1.0 - alpha) * dg;
            err += e * e;
        }
        sum += err;
        sum_sq += err * err;
    }
    const double n = static_cast<double>(trials);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n), predicted};
}

}  // namespace trifusion
