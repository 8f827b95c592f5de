#include "trifusion/sensitivity.hpp"

#include <cmath>
#include <string>

#include "trifusion/error.hpp"

namespace trifusion {

RegressionFit ols_fit(std::span<const std::pair<double, double>> points) {
    const std::size_t n = points.size();
    if (n < 2) {
        throw InputError("ols_fit needs at least two points, got " + std::to_string(n));
    }
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
        if (!std::isfinite(x) || !std::isfinite(y)) {
            throw InputError("ols_fit: non-finite point");
        }
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0) {
        throw DegenerateError("ols_fit: all x values are identical");
    }
    RegressionFit fit;
    fit.n = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy == 0.0 ? 1.0 : std::min(1.0, (sxy * sxy) / (sxx * syy));
    return fit;
}

}  // namespace trifusion
