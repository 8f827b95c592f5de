#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "trifusion/attacks.hpp"
#include "trifusion/models.hpp"
#include "trifusion/ops.hpp"

using namespace trifusion;
using trifusion::testing::random_tensor;

namespace {

// Loss gradient of mse(w * x, x_star) is 2/n * w * (w x - x_star); choosing
// x_star far below w x makes the sign of every component the sign of w.
ReconModel scaling_model(const Tensor& w) {
    return [w](const Tensor& x) { return mul(x, w); };
}

ReconModel small_cnn() {
    auto p = std::make_shared<CnnAeParams>(init_cnn_ae(5));
    return [p](const Tensor& x) { return cnn_ae_forward(*p, x).recon; };
}

}  // namespace

TEST(Gaussian, ZeroAlphaIsIdentity) {
    auto x = random_tensor({4, 8, 8}, 1, -255, 255);
    EXPECT_TRUE(gaussian_perturb(x, 0.0f, 3).same_values(x));
}

TEST(Gaussian, VarianceMatchesAlphaSquared) {
    Tensor x({1000000});
    for (float alpha : {0.5f, 20.0f}) {
        auto y = gaussian_perturb(x, alpha, 11);
        double s = 0.0, s2 = 0.0;
        for (float v : y.data()) {
            s += v;
            s2 += double(v) * v;
        }
        const double n = double(y.size());
        const double var = (s2 - s * s / n) / (n - 1);
        EXPECT_GE(var, 0.99 * alpha * alpha);
        EXPECT_LE(var, 1.01 * alpha * alpha);
    }
}

TEST(Gaussian, DeterministicPerSeedAndSample) {
    auto x = random_tensor({64}, 2);
    EXPECT_TRUE(gaussian_perturb(x, 5, 7, 3).same_values(gaussian_perturb(x, 5, 7, 3)));
    EXPECT_FALSE(gaussian_perturb(x, 5, 7, 3).same_values(gaussian_perturb(x, 5, 7, 4)));
    EXPECT_FALSE(gaussian_perturb(x, 5, 7, 3).same_values(gaussian_perturb(x, 5, 8, 3)));
    EXPECT_THROW(gaussian_perturb(x, -1, 7), InputError);
}

TEST(Fgsm, SignDefinition) {
    Tensor g({3}, {0.5f, -0.2f, 0.0f});
    auto d = fgsm_perturbation(g, 0.1f);
    EXPECT_EQ(d.values(), (std::vector<float>{0.1f, -0.1f, 0.0f}));
}

TEST(Fgsm, ZeroEpsIsIdentity) {
    auto x = random_tensor({4, 8, 8}, 3, -255, 255);
    EXPECT_TRUE(fgsm_attack(small_cnn(), x, x, 0.0f).same_values(x));
}

TEST(Fgsm, FollowsGradientSign) {
    Tensor w({4}, {2.0f, -3.0f, 0.5f, -0.25f});
    Tensor x({4}, {1, 1, 1, 1});
    Tensor target({4}, {-100, -100, -100, -100});
    auto adv = fgsm_attack(scaling_model(w), x, target, 0.5f);
    EXPECT_EQ(adv.values(), (std::vector<float>{1.5f, 0.5f, 1.5f, 0.5f}));
}

TEST(Fgsm, RandomizedPerturbationIsExactlyTernary) {
    Rng rng(1);
    for (int c = 0; c < 200; ++c) {
        auto g = random_tensor({37}, 100 + c);
        g.mutable_data()[c % 37] = 0.0f;
        const float eps = static_cast<float>(rng.uniform(0.0, 70.0));
        auto d = fgsm_perturbation(g, eps);
        for (float v : d.data()) {
            EXPECT_TRUE(v == eps || v == -eps || v == 0.0f);
        }
        EXPECT_EQ(d[c % 37], 0.0f);
    }
}

TEST(Fgsm, NeedsTrackedModel) {
    ReconModel detached = [](const Tensor& x) { return x.detach(); };
    auto x = random_tensor({8}, 1);
    EXPECT_THROW(fgsm_attack(detached, x, x, 0.1f), ContractError);
    PgdOptions opt;
    opt.eps = 1.0f;
    EXPECT_THROW(pgd_attack(detached, x, x, opt), ContractError);
}

TEST(Project, ClampAndIdempotence) {
    Tensor x({3});
    Tensor adv({3}, {2.0f, -3.0f, 0.5f});
    auto p = linf_project(adv, x, 1.0f);
    EXPECT_EQ(p.values(), (std::vector<float>{1.0f, -1.0f, 0.5f}));
    EXPECT_TRUE(linf_project(p, x, 1.0f).same_values(p));
    Tensor inside({3}, {0.1f, -0.9f, 1.0f});
    EXPECT_TRUE(linf_project(inside, x, 1.0f).same_values(inside));
    EXPECT_THROW(linf_project(adv, Tensor({2}), 1.0f), DimensionError);
}

TEST(Pgd, ZeroItersReturnsStart) {
    auto x = random_tensor({4, 8, 8}, 4, -255, 255);
    PgdOptions opt;
    opt.eps = 2.0f;
    opt.iters = 0;
    opt.seed = 9;
    auto y = pgd_attack(small_cnn(), x, x, opt);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(double(y[i]) - x[i]));
    EXPECT_LE(worst, 2.0 + 1e-4);
    EXPECT_GT(worst, 0.0);
}

TEST(Pgd, ProjectionClampsToyIterates) {
    Tensor w({1}, {1.0f});
    Tensor x({1}, {0.0f});
    Tensor target({1}, {-100.0f});
    std::vector<float> seen;
    PgdOptions opt;
    opt.eps = 1.0f;
    opt.step = 0.4f;
    opt.iters = 5;
    opt.random_start = false;
    opt.observer = [&](std::size_t t, const Tensor& xt) {
        if (t > 0) seen.push_back(xt[0]);
    };
    pgd_attack(scaling_model(w), x, target, opt);
    ASSERT_EQ(seen.size(), 5u);
    EXPECT_FLOAT_EQ(seen[0], 0.4f);
    EXPECT_FLOAT_EQ(seen[1], 0.8f);
    EXPECT_EQ(seen[2], 1.0f);
    EXPECT_EQ(seen[3], 1.0f);
    EXPECT_EQ(seen[4], 1.0f);
}

TEST(Pgd, SingleStepEqualsFgsmBitwise) {
    auto model = small_cnn();
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto x = random_tensor({4, 8, 8}, 20 + s, -255, 255);
        auto target = random_tensor({4, 8, 8}, 40 + s, -255, 255);
        const float eps = 0.3f + 7.0f * s;
        PgdOptions opt;
        opt.eps = eps;
        opt.step = eps;
        opt.iters = 1;
        opt.random_start = false;
        EXPECT_TRUE(pgd_attack(model, x, target, opt).same_values(fgsm_attack(model, x, target, eps)));
    }
}

TEST(Pgd, EveryIterateStaysInBall) {
    auto model = small_cnn();
    auto x = random_tensor({4, 8, 8}, 5, -255, 255);
    PgdOptions opt;
    opt.eps = 5.0f;
    opt.step = 1.5f;
    opt.iters = 10;
    opt.seed = 3;
    std::size_t calls = 0;
    opt.observer = [&](std::size_t, const Tensor& xt) {
        ++calls;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const float lo = x[i] - opt.eps, hi = x[i] + opt.eps;
            EXPECT_GE(xt[i], lo);
            EXPECT_LE(xt[i], hi);
        }
    };
    pgd_attack(model, x, x, opt);
    EXPECT_EQ(calls, 11u);
}

TEST(Pgd, Deterministic) {
    auto model = small_cnn();
    auto x = random_tensor({4, 8, 8}, 6, -255, 255);
    PgdOptions opt;
    opt.eps = 3.0f;
    opt.iters = 3;
    opt.seed = 4;
    EXPECT_TRUE(pgd_attack(model, x, x, opt).same_values(pgd_attack(model, x, x, opt)));
}

TEST(Pgd, ClampToRange) {
    Tensor w({2}, {1.0f, -1.0f});
    Tensor x({2}, {254.0f, -254.0f});
    Tensor target({2}, {-1000.0f, -1000.0f});
    PgdOptions opt;
    opt.eps = 10.0f;
    opt.step = 5.0f;
    opt.iters = 3;
    opt.random_start = false;
    opt.clamp_to_range = true;
    auto y = pgd_attack(scaling_model(w), x, target, opt);
    EXPECT_EQ(y[0], 255.0f);
    EXPECT_EQ(y[1], -255.0f);
}

TEST(Perturb, SpecValidation) {
    PerturbationSpec s;
    s.level = -1.0f;
    EXPECT_THROW(s.validate(), ConfigError);
    s.level = 1.0f;
    s.kind = PerturbationKind::pgd;
    s.pgd_step = 0.0f;
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_EQ(parse_perturbation_kind("fgsm"), PerturbationKind::fgsm);
    EXPECT_THROW(parse_perturbation_kind("cw"), ConfigError);
}

TEST(Perturb, OnlyLidarIsTouched) {
    ModelDims dims;
    dims.lidar_height = 8;
    dims.lidar_width = 8;
    dims.views = 2;
    dims.image_height = 16;
    dims.image_width = 16;
    dims.depth_patch = 8;
    dims.embed_dim = 16;
    dims.heads = 2;
    dims.text_dim = 12;
    auto params = std::make_shared<TriFusionParams>(init_trifusion(dims, 2));
    std::vector<Tensor> views{random_tensor({3, 16, 16}, 1, 0, 1), random_tensor({3, 16, 16}, 2, 0, 1)};
    auto text = random_tensor({12}, 3);
    const auto views_before = views;
    const auto text_before = text;
    ReconModel model = [&](const Tensor& x) { return trifusion_forward<float>(*params, dims, x, views, text); };
    auto x = random_tensor({4, 8, 8}, 4, -255, 255);
    PerturbationSpec spec;
    spec.kind = PerturbationKind::pgd;
    spec.level = 5.0f;
    spec.pgd_iters = 3;
    auto adv = perturb(spec, model, x, x, 0);
    EXPECT_FALSE(adv.same_values(x));
    for (std::size_t v = 0; v < views.size(); ++v) EXPECT_TRUE(views[v].same_values(views_before[v]));
    EXPECT_TRUE(text.same_values(text_before));
}
