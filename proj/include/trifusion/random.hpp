#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace trifusion {

// Every random draw in the project comes from std::mt19937_64 seeded through
// derive_seed(). A stream is identified by (base seed, purpose, two indices);
// distinct purposes never share a stream.
enum class StreamPurpose : std::uint64_t {
    scene_layout = 1,
    text_embedding = 2,
    weight_init = 3,
    dataset_split = 4,
    batch_order = 5,
    gaussian_noise = 6,
    pgd_init = 7,
    grad_check = 8,
    monte_carlo = 9,
    test_data = 10,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::uint64_t derive_seed(std::uint64_t base, StreamPurpose purpose, std::uint64_t a = 0,
                          std::uint64_t b = 0) noexcept;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t base, StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0)
        : engine_(derive_seed(base, purpose, a, b)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi].
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

    /// Standard normal via the Box-Muller transform; the second variate of
    /// each pair is cached.
    double normal();

    void fill_normal(std::span<float> out, double mean, double stddev);
    void fill_uniform(std::span<float> out, double lo, double hi);

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace trifusion
