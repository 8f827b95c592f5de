#include "trifusion/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "trifusion/ops.hpp"
#include "trifusion/random.hpp"

namespace trifusion {

std::string to_string(PerturbationKind kind) {
    switch (kind) {
        case PerturbationKind::gaussian:
            return "gaussian";
        case PerturbationKind::fgsm:
            return "fgsm";
        case PerturbationKind::pgd:
            return "pgd";
    }
    return "unknown";
}

PerturbationKind parse_perturbation_kind(const std::string& name) {
    if (name == "gaussian") return PerturbationKind::gaussian;
    if (name == "fgsm") return PerturbationKind::fgsm;
    if (name == "pgd") return PerturbationKind::pgd;
    throw ConfigError("unknown perturbation kind '" + name + "' (expected gaussian, fgsm or pgd)");
}

void PerturbationSpec::validate() const {
    if (!(level >= 0.0f) || !std::isfinite(level)) {
        throw ConfigError("perturbation level must be finite and non-negative, got " + std::to_string(level));
    }
    if (kind == PerturbationKind::pgd && !(pgd_step > 0.0f)) {
        throw ConfigError("PGD step must be positive, got " + std::to_string(pgd_step));
    }
}

namespace {

void clamp_range(std::span<float> v) {
    for (float& x : v) {
        x = std::clamp(x, kLidarMin, kLidarMax);
    }
}

}  // namespace

Tensor input_gradient(const ReconModel& model, const Tensor& x, const Tensor& x_star) {
    Tape<float> tape;
    const auto leaf = tape.watch(x.detach());
    const auto loss = mse_loss(model(leaf), x_star);
    if (!loss.tracked()) {
        throw ContractError("attack needs a model whose output depends on its input through the tape");
    }
    return tape.backward(loss).at(leaf);
}

Tensor gaussian_perturb(const Tensor& x, float alpha, std::uint64_t seed, std::uint64_t sample) {
    if (!(alpha >= 0.0f)) {
        throw InputError("gaussian_perturb: alpha must be non-negative");
    }
    Tensor out = x.detach();
    if (alpha == 0.0f) {
        return out;
    }
    Rng rng(seed, StreamPurpose::gaussian_noise, sample);
    for (float& v : out.mutable_data()) {
        v = static_cast<float>(v + alpha * rng.normal());
    }
    return out;
}

Tensor fgsm_perturbation(const Tensor& grad, float eps) {
    Tensor delta(grad.shape());
    auto d = delta.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const float g = grad[i];
        d[i] = g > 0.0f ? eps : (g < 0.0f ? -eps : 0.0f);
    }
    return delta;
}

Tensor fgsm_attack(const ReconModel& model, const Tensor& x, const Tensor& x_star, float eps) {
    if (!(eps >= 0.0f)) {
        throw InputError("fgsm_attack: eps must be non-negative");
    }
    return add(x.detach(), fgsm_perturbation(input_gradient(model, x, x_star), eps));
}

Tensor linf_project(const Tensor& x_adv, const Tensor& x, float eps) {
    if (x_adv.shape() != x.shape()) {
        throw DimensionError("linf_project: shape " + shape_string(x_adv.shape()) + " vs " + shape_string(x.shape()));
    }
    if (!(eps >= 0.0f)) {
        throw InputError("linf_project: eps must be non-negative");
    }
    Tensor out = x_adv.detach();
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = std::clamp(o[i], x[i] - eps, x[i] + eps);
    }
    return out;
}

Tensor pgd_attack(const ReconModel& model, const Tensor& x, const Tensor& x_star, const PgdOptions& opt) {
    if (!(opt.eps >= 0.0f)) {
        throw InputError("pgd_attack: eps must be non-negative");
    }
    if (!(opt.step > 0.0f)) {
        throw InputError("pgd_attack: step must be positive");
    }
    Tensor cur = x.detach();
    if (opt.random_start && opt.eps > 0.0f) {
        Rng rng(opt.seed, StreamPurpose::pgd_init, opt.sample);
        auto c = cur.mutable_data();
        for (float& v : c) {
            v = static_cast<float>(v + rng.uniform(-opt.eps, opt.eps));
        }
        cur = linf_project(cur, x, opt.eps);
    }
    if (opt.clamp_to_range) {
        clamp_range(cur.mutable_data());
    }
    if (opt.observer) {
        opt.observer(0, cur);
    }
    for (std::size_t t = 1; t <= opt.iters; ++t) {
        const Tensor g = input_gradient(model, cur, x_star);
        auto c = cur.mutable_data();
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (g[i] > 0.0f) {
                c[i] += opt.step;
            } else if (g[i] < 0.0f) {
                c[i] -= opt.step;
            }
        }
        cur = linf_project(cur, x, opt.eps);
        if (opt.clamp_to_range) {
            clamp_range(cur.mutable_data());
        }
        if (opt.observer) {
            opt.observer(t, cur);
        }
    }
    return cur;
}

Tensor perturb(const PerturbationSpec& spec, const ReconModel& model, const Tensor& x, const Tensor& x_star,
               std::uint64_t sample) {
    spec.validate();
    Tensor out;
    switch (spec.kind) {
        case PerturbationKind::gaussian:
            out = gaussian_perturb(x, spec.level, spec.seed, sample);
            break;
        case PerturbationKind::fgsm:
            out = fgsm_attack(model, x, x_star, spec.level);
            break;
        case PerturbationKind::pgd: {
            PgdOptions opt;
            opt.eps = spec.level;
            opt.step = spec.pgd_step;
            opt.iters = spec.pgd_iters;
            opt.seed = spec.seed;
            opt.sample = sample;
            opt.random_start = spec.pgd_random_start;
            opt.clamp_to_range = spec.clamp_to_range;
            return pgd_attack(model, x, x_star, opt);
        }
    }
    if (spec.clamp_to_range) {
        clamp_range(out.mutable_data());
    }
    return out;
}

}  // namespace trifusion
