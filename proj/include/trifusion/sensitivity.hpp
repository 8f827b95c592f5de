#pragma once

#include <span>
#include <utility>

namespace trifusion {

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

/// Ordinary least squares y = m x + C in double. r2 is 1 when y is constant.
/// InputError when n < 2, DegenerateError when every x is equal.
RegressionFit ols_fit(std::span<const std::pair<double, double>> points);

/// |m|.
inline double sensitivity(const RegressionFit& fit) { return fit.slope < 0 ? -fit.slope : fit.slope; }

}  // namespace trifusion
