#include "trifusion/random.hpp"

#include <cmath>
#include <numbers>

namespace trifusion {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, StreamPurpose purpose, std::uint64_t a,
                          std::uint64_t b) noexcept {
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
    h = splitmix64(h ^ a);
    return splitmix64(h ^ (b * 0xd1b54a32d192ed03ULL));
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) {
        return engine_();
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0} / span) * span;
    std::uint64_t r = engine_();
    while (r >= limit) {
        r = engine_();
    }
    return lo + r % span;
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
}

void Rng::fill_normal(std::span<float> out, double mean, double stddev) {
    for (auto& v : out) {
        v = static_cast<float>(mean + stddev * normal());
    }
}

void Rng::fill_uniform(std::span<float> out, double lo, double hi) {
    for (auto& v : out) {
        v = static_cast<float>(uniform(lo, hi));
    }
}

}  // namespace trifusion
