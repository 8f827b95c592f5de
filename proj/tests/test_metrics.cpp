#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "trifusion/metrics.hpp"
#include "trifusion/ops.hpp"
#include "trifusion/sensitivity.hpp"

using namespace trifusion;
using trifusion::testing::random_tensor;

TEST(Mse, Basics) {
    Tensor a({2}, {0, 0});
    Tensor b({2}, {1, 1});
    EXPECT_EQ(mse(a, a), 0.0);
    EXPECT_EQ(mse(a, b), 1.0);
    EXPECT_THROW(mse(a, Tensor({3})), DimensionError);
}

TEST(Mse, AgreesWithTensorLoss) {
    auto x = random_tensor({4, 32, 32}, 1, -255, 255);
    auto y = random_tensor({4, 32, 32}, 2, -255, 255);
    const double m = mse(x, y);
    EXPECT_NEAR(mse_loss(x, y).item() / m, 1.0, 1e-6);
}

TEST(Psnr, ReferenceValues) {
    EXPECT_NEAR(psnr(255.0 * 255.0), 0.0, 1e-12);
    // 20 log10(255), evaluated independently.
    EXPECT_NEAR(psnr(1.0), 48.130803608679, 1e-9);
    EXPECT_EQ(psnr(0.0), kPsnrInfinity);
}

TEST(Psnr, Modes) {
    Tensor batch({3}, {-100.0f, 40.0f, 5.0f});
    MetricConfig c{PsnrMaxMode::per_batch_max, 0.0};
    EXPECT_NEAR(psnr(100.0, c, &batch), 20.0, 1e-12);
    EXPECT_THROW(psnr(1.0, c), ConfigError);
    MetricConfig p2p{PsnrMaxMode::peak_to_peak, 0.0};
    EXPECT_NEAR(psnr(510.0 * 510.0, p2p), 0.0, 1e-12);
    EXPECT_THROW(psnr(1.0, MetricConfig{PsnrMaxMode::constant, 0.0}), ConfigError);
    EXPECT_THROW(psnr(1.0, MetricConfig{PsnrMaxMode::constant, -5.0}), ConfigError);
    Tensor zeros({2});
    EXPECT_THROW(psnr(1.0, c, &zeros), ConfigError);
    EXPECT_EQ(parse_psnr_mode("peak_to_peak"), PsnrMaxMode::peak_to_peak);
    EXPECT_THROW(parse_psnr_mode("db"), ConfigError);
}

TEST(Psnr, StrictlyDecreasingInMse) {
    double prev = psnr(1e-6);
    for (double m = 1e-5; m < 1e6; m *= 1.7) {
        const double cur = psnr(m);
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(Psnr, PerturbationMakesItFinite) {
    auto x = random_tensor({4, 8, 8}, 3, -255, 255);
    EXPECT_EQ(psnr(mse(x, x)), kPsnrInfinity);
    auto y = x.detach();
    y.mutable_data()[5] += 1e-3f;
    EXPECT_TRUE(std::isfinite(psnr(mse(x, y))));
}

TEST(PercentDelta, TableRows) {
    EXPECT_NEAR(percent_delta(205.711, 155.779), 32.05, 0.005);
    EXPECT_NEAR(percent_delta(595.502, 626.165), -4.90, 0.005);
    EXPECT_EQ(percent_delta(3.5, 3.5), 0.0);
    EXPECT_THROW(percent_delta(1.0, 0.0), InputError);
}

TEST(Ols, ExactLine) {
    std::vector<std::pair<double, double>> pts{{0, 1}, {1, 3}, {2, 5}};
    auto f = ols_fit(pts);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_EQ(f.n, 3u);
}

TEST(Ols, ConstantY) {
    std::vector<std::pair<double, double>> pts{{0, 4}, {1, 4}, {5, 4}};
    auto f = ols_fit(pts);
    EXPECT_EQ(f.slope, 0.0);
    EXPECT_EQ(f.intercept, 4.0);
    EXPECT_EQ(sensitivity(f), 0.0);
}

TEST(Ols, Errors) {
    std::vector<std::pair<double, double>> one{{0, 1}};
    EXPECT_THROW(ols_fit(one), InputError);
    std::vector<std::pair<double, double>> same_x{{2, 1}, {2, 3}};
    EXPECT_THROW(ols_fit(same_x), DegenerateError);
}

TEST(Ols, SensitivityIsAbsoluteSlope) {
    std::vector<std::pair<double, double>> pts{{0, 1.0}, {10, 0.2}};
    EXPECT_NEAR(sensitivity(ols_fit(pts)), 0.08, 1e-12);
}

class OlsProperty : public ::testing::TestWithParam<int> {};

TEST_P(OlsProperty, ScaleShiftAndOrthogonality) {
    Rng rng(GetParam(), StreamPurpose::test_data);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 12; ++i) pts.emplace_back(rng.uniform(0, 70), rng.uniform(100, 4000));
    const auto base = ols_fit(pts);

    const double k = rng.uniform(-5, 5);
    auto scaled = pts;
    for (auto& p : scaled) p.second *= k;
    EXPECT_NEAR(ols_fit(scaled).slope, k * base.slope, 1e-9 * std::abs(k * base.slope) + 1e-12);

    auto shifted = pts;
    for (auto& p : shifted) p.second += 1234.5;
    const auto sh = ols_fit(shifted);
    EXPECT_NEAR(sh.slope, base.slope, 1e-6);
    EXPECT_NEAR(sh.intercept, base.intercept + 1234.5, 1e-6);

    double mx = 0;
    for (auto& p : pts) mx += p.first / pts.size();
    double dot = 0, scale = 0;
    for (auto& [x, y] : pts) {
        const double r = y - (base.slope * x + base.intercept);
        dot += (x - mx) * r;
        scale += std::abs((x - mx) * y);
    }
    EXPECT_LE(std::abs(dot), 1e-4 * scale);
    EXPECT_GE(base.r2, 0.0);
    EXPECT_LE(base.r2, 1.0);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OlsProperty, ::testing::Range(0, 10));
