#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "trifusion/random.hpp"
#include "trifusion/tensor.hpp"

namespace trifusion {

struct GradCheckOptions {
    /// Coordinates compared; all of them when the input is smaller.
    std::size_t samples = 16;
    std::uint64_t seed = 0;
    /// Kink detection (e.g. relu at 0). A coordinate is skipped when the
    /// central differences at eps and eps/2 disagree by more than this
    /// relative amount, or when the one-sided slopes disagree by more than it
    /// and the disagreement does not shrink with the step, which smooth
    /// functions always do.
    double kink_tolerance = 1e-5;
    /// Relative errors use max(|analytic|, |numeric|, floor * max|analytic|)
    /// as denominator so coordinates with vanishing gradient do not amplify
    /// round-off.
    double floor_fraction = 1e-6;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::vector<std::size_t> checked;
    std::vector<std::size_t> excluded;
};

/// Compares the tape gradient of scalar f at x against central differences
/// (f(x+eps e_i) - f(x-eps e_i)) / (2 eps). `f` receives a tracked tensor for
/// the analytic pass and untracked perturbed copies for the numeric passes.
/// Differences and error ratios are accumulated in double.
template <typename T>
GradCheckResult grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f, const BasicTensor<T>& x,
                           T eps, const GradCheckOptions& options = {}) {
    if (!(eps > T{0})) {
        throw ContractError("grad_check: eps must be positive");
    }
    Tape<T> tape;
    const auto leaf = tape.watch(x.detach());
    const auto loss = f(leaf);
    if (!loss.is_scalar()) {
        throw ContractError("grad_check: function must be scalar-valued, got shape " + shape_string(loss.shape()));
    }
    if (!loss.tracked()) {
        throw ContractError("grad_check: function output does not depend on its input through the tape");
    }
    const auto grads = tape.backward(loss);
    const auto& analytic = grads.at(leaf);

    double analytic_max = 0.0;
    for (T g : analytic.data()) {
        analytic_max = std::max(analytic_max, std::abs(static_cast<double>(g)));
    }

    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(options.seed, StreamPurpose::grad_check);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
    }

    auto eval = [&](const BasicTensor<T>& point) { return static_cast<double>(f(point).item()); };
    const double f0 = eval(x.detach());

    GradCheckResult result;
    for (std::size_t idx : order) {
        if (result.checked.size() >= options.samples) {
            break;
        }
        auto plus = x.detach();
        auto minus = x.detach();
        plus.mutable_data()[idx] += eps;
        minus.mutable_data()[idx] -= eps;
        const double fp = eval(plus);
        const double fm = eval(minus);
        auto half_plus = x.detach();
        auto half_minus = x.detach();
        half_plus.mutable_data()[idx] += eps / T{2};
        half_minus.mutable_data()[idx] -= eps / T{2};
        const double hp = eval(half_plus);
        const double hm = eval(half_minus);
        // Effective steps after rounding the perturbed coordinate to T.
        const double xi = static_cast<double>(x[idx]);
        const double up = static_cast<double>(plus[idx]) - xi;
        const double down = xi - static_cast<double>(minus[idx]);
        const double half_up = static_cast<double>(half_plus[idx]) - xi;
        const double half_down = xi - static_cast<double>(half_minus[idx]);
        const double numeric = (fp - fm) / (up + down);
        const double numeric_half = (hp - hm) / (half_up + half_down);
        const double jump = std::abs((fp - f0) / up - (f0 - fm) / down);
        const double jump_half = std::abs((hp - f0) / half_up - (f0 - hm) / half_down);
        const double scale =
            std::max({std::abs(numeric), std::abs(numeric_half), options.floor_fraction * analytic_max});
        const double tol = options.kink_tolerance * scale;
        const bool straddles = std::abs(numeric - numeric_half) > tol;
        const bool at_kink = jump > tol && jump_half > 0.75 * jump;
        if (scale > 0.0 && (straddles || at_kink)) {
            result.excluded.push_back(idx);
            continue;
        }
        const double a = static_cast<double>(analytic[idx]);
        const double denom = std::max({std::abs(a), std::abs(numeric), options.floor_fraction * analytic_max});
        const double rel = denom > 0.0 ? std::abs(a - numeric) / denom : 0.0;
        result.max_rel_error = std::max(result.max_rel_error, rel);
        result.checked.push_back(idx);
    }
    return result;
}

}  // namespace trifusion
