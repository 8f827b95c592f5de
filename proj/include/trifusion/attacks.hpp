#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "trifusion/tensor.hpp"

namespace trifusion {

/// Differentiable reconstruction x -> x_hat. Must build its graph on the
/// tape of its (tracked) input for attacks to obtain gradients.
using ReconModel = std::function<Tensor(const Tensor&)>;

enum class PerturbationKind { gaussian, fgsm, pgd };

std::string to_string(PerturbationKind kind);
/// ConfigError on unknown names.
PerturbationKind parse_perturbation_kind(const std::string& name);

/// Range every LiDAR value lies in; used by clamp_to_range.
inline constexpr float kLidarMin = -255.0f;
inline constexpr float kLidarMax = 255.0f;

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::gaussian;
    float level = 0.0f;  ///< alpha for gaussian, ball radius for fgsm/pgd
    float pgd_step = 0.01f;
    std::size_t pgd_iters = 40;
    bool pgd_random_start = true;
    std::uint64_t seed = 0;
    bool clamp_to_range = false;

    /// ConfigError on negative level or nonpositive PGD step.
    void validate() const;
};

/// Gradient of MSE(model(x), x_star) with respect to x. ContractError when
/// the loss does not depend on x through the tape.
Tensor input_gradient(const ReconModel& model, const Tensor& x, const Tensor& x_star);

/// x + alpha * n, n ~ N(0, 1) from the gaussian_noise stream of
/// (seed, sample). InputError on negative alpha.
Tensor gaussian_perturb(const Tensor& x, float alpha, std::uint64_t seed, std::uint64_t sample = 0);

/// eps * sign(grad) with sign(0) = 0; every component is exactly -eps, 0 or eps.
Tensor fgsm_perturbation(const Tensor& grad, float eps);

/// x + eps * sign(grad MSE(model(x), x_star)).
Tensor fgsm_attack(const ReconModel& model, const Tensor& x, const Tensor& x_star, float eps);

/// Elementwise clamp of x_adv into [x - eps, x + eps] (bounds rounded to f32).
Tensor linf_project(const Tensor& x_adv, const Tensor& x, float eps);

struct PgdOptions {
    float eps = 0.0f;
    float step = 0.01f;
    std::size_t iters = 40;
    std::uint64_t seed = 0;
    std::uint64_t sample = 0;
    /// Start from x + U(-eps, eps) drawn from the pgd_init stream; x otherwise.
    bool random_start = true;
    bool clamp_to_range = false;
    /// Sees the start point (t = 0) and every projected iterate (t = 1..iters).
    std::function<void(std::size_t, const Tensor&)> observer;
};

Tensor pgd_attack(const ReconModel& model, const Tensor& x, const Tensor& x_star, const PgdOptions& options);

/// Dispatches on spec.kind. `sample` selects the noise and PGD start
/// streams, so two models evaluated on the same sample see identical draws.
Tensor perturb(const PerturbationSpec& spec, const ReconModel& model, const Tensor& x, const Tensor& x_star,
               std::uint64_t sample);

}  // namespace trifusion
