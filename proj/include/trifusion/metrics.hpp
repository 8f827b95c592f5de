#pragma once

#include <limits>
#include <optional>
#include <string>

#include "trifusion/tensor.hpp"

namespace trifusion {

enum class PsnrMaxMode {
    constant,       ///< MetricConfig::max_value
    per_batch_max,  ///< largest |value| of the reference batch
    peak_to_peak,   ///< 510, the width of [-255, 255]
};

struct MetricConfig {
    PsnrMaxMode mode = PsnrMaxMode::constant;
    double max_value = 255.0;
};

/// ConfigError on unknown names ("constant", "per_batch_max", "peak_to_peak").
PsnrMaxMode parse_psnr_mode(const std::string& name);
std::string to_string(PsnrMaxMode mode);

/// Returned by psnr() for a perfect reconstruction.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

/// Mean squared error, accumulated in double.
double mse(const Tensor& recon, const Tensor& clean);

/// 10 log10(MAX^2 / mse). `batch` is required for per_batch_max. Throws
/// ConfigError when MAX <= 0 and InputError on negative mse.
double psnr(double mse_value, const MetricConfig& cfg = {}, const Tensor* batch = nullptr);

/// 100 (tri - cnn) / cnn; InputError when cnn == 0.
double percent_delta(double trifusion_value, double cnn_value);

}  // namespace trifusion
