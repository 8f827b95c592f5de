#include <gtest/gtest.h>

#include <cmath>

#include "trifusion/error.hpp"
#include "trifusion/fusion_oracle.hpp"
#include "trifusion/random.hpp"

using namespace trifusion;

namespace {

// Independent oracle: exhaustive search over alpha in {0, 0.001, ..., 1}.
double grid_min(double vx, double vp) {
    double best = 1e300;
    for (int i = 0; i <= 1000; ++i) {
        const double a = i / 1000.0;
        best = std::min(best, a * a * vx + (1 - a) * (1 - a) * vp);
    }
    return best;
}

}  // namespace

TEST(EffectiveErrors, Sums) {
    auto e = effective_errors({1, 0, 1, 0});
    EXPECT_EQ(e.v_x, 1.0);
    EXPECT_EQ(e.v_p, 1.0);
    e = effective_errors({0.5, 0.5, 0.25, 0.75});
    EXPECT_EQ(e.v_x, 1.0);
    EXPECT_EQ(e.v_p, 1.0);
    e = effective_errors({});
    EXPECT_EQ(e.v_x, 0.0);
    EXPECT_EQ(e.v_p, 0.0);
    EXPECT_THROW(effective_errors({-1, 0, 0, 0}), InputError);
}

TEST(ErrorAtAlpha, Boundaries) {
    EXPECT_EQ(error_at_alpha(3, 2, 1), 3.0);
    EXPECT_EQ(error_at_alpha(3, 2, 0), 2.0);
    EXPECT_EQ(error_at_alpha(1, 1, 0.5), 0.5);
    EXPECT_THROW(error_at_alpha(1, 1, 1.5), InputError);
    EXPECT_THROW(error_at_alpha(1, 1, -0.1), InputError);
}

TEST(ErrorAtAlpha, Convex) {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double vx = rng.uniform(0, 10), vp = rng.uniform(0, 10);
        const double h = rng.uniform(0, 0.3), a = rng.uniform(h, 1 - h);
        const double second = error_at_alpha(vx, vp, a - h) - 2 * error_at_alpha(vx, vp, a) +
                              error_at_alpha(vx, vp, a + h);
        EXPECT_GE(second, -1e-12);
    }
}

TEST(OptimalAlpha, ClosedForms) {
    auto o = optimal_alpha(2, 2);
    EXPECT_EQ(o.alpha, 0.5);
    EXPECT_EQ(o.error_min, 1.0);
    o = optimal_alpha(3, 1);
    EXPECT_DOUBLE_EQ(o.alpha, 0.25);
    EXPECT_DOUBLE_EQ(o.error_min, 0.75);
    EXPECT_NEAR(grid_min(3, 1), 0.75, 1e-6);
    o = optimal_alpha(4, 0);
    EXPECT_EQ(o.alpha, 0.0);
    EXPECT_EQ(o.error_min, 0.0);
    EXPECT_THROW(optimal_alpha(0, 0), DegenerateError);
}

TEST(OptimalAlpha, NeverBeatenByGrid) {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double vx = std::exp(rng.uniform(-5, 5)), vp = std::exp(rng.uniform(-5, 5));
        const auto o = optimal_alpha(vx, vp);
        const double g = grid_min(vx, vp);
        // Grid can miss the optimum by at most the curvature times half a step squared.
        const double slack = (vx + vp) * 0.0005 * 0.0005;
        EXPECT_LE(o.error_min, g + 1e-12 * g);
        EXPECT_LE(g - o.error_min, slack + 1e-12);
    }
}

TEST(Improvement, Holds) {
    EXPECT_TRUE(improvement_holds(1, 1));
    EXPECT_TRUE(improvement_holds(1e-6, 1e6));
    EXPECT_TRUE(improvement_holds(2, 0));
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        EXPECT_TRUE(improvement_holds(std::exp(rng.uniform(-10, 10)), std::exp(rng.uniform(-10, 10))));
    }
}

TEST(MonteCarlo, Examples) {
    auto zero = monte_carlo_validate({}, 0.5, 4, 1000, 1);
    EXPECT_EQ(zero.mean, 0.0);

    auto half = monte_carlo_validate({1, 0, 1, 0}, 0.5, 8, 100000, 2);
    EXPECT_NEAR(half.predicted, 0.5, 1e-15);
    EXPECT_LE(std::abs(half.mean - 0.5), 3 * half.standard_error);

    OracleParams p{0.7, 0.3, 2.0, 1.0};
    auto lidar_only = monte_carlo_validate(p, 1.0, 8, 100000, 3);
    EXPECT_LE(std::abs(lidar_only.mean - 1.0), 3 * lidar_only.standard_error + 1e-12);
}

TEST(MonteCarlo, Errors) {
    EXPECT_THROW(monte_carlo_validate({1, 0, 1, 0}, 0.5, 4, 999, 1), InputError);
    EXPECT_THROW(monte_carlo_validate({1, 1, 1, 1}, 0.5, 1, 1000, 1), InputError);
    EXPECT_THROW(monte_carlo_validate({1, 0, 1, 0}, 1.5, 4, 1000, 1), InputError);
}

TEST(MonteCarlo, DeterministicPerSeed) {
    OracleParams p{1, 0.5, 0.3, 0.2};
    EXPECT_EQ(monte_carlo_validate(p, 0.3, 4, 2000, 9).mean, monte_carlo_validate(p, 0.3, 4, 2000, 9).mean);
}
