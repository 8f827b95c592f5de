#include "trifusion/metrics.hpp"

#include <cmath>

namespace trifusion {

PsnrMaxMode parse_psnr_mode(const std::string& name) {
    if (name == "constant") return PsnrMaxMode::constant;
    if (name == "per_batch_max") return PsnrMaxMode::per_batch_max;
    if (name == "peak_to_peak") return PsnrMaxMode::peak_to_peak;
    throw ConfigError("unknown PSNR max mode '" + name + "'");
}

std::string to_string(PsnrMaxMode mode) {
    switch (mode) {
        case PsnrMaxMode::constant:
            return "constant";
        case PsnrMaxMode::per_batch_max:
            return "per_batch_max";
        case PsnrMaxMode::peak_to_peak:
            return "peak_to_peak";
    }
    return "unknown";
}

double mse(const Tensor& recon, const Tensor& clean) {
    if (recon.shape() != clean.shape()) {
        throw DimensionError("mse: shape " + shape_string(recon.shape()) + " vs " + shape_string(clean.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const double d = static_cast<double>(recon[i]) - static_cast<double>(clean[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(recon.size());
}

double psnr(double mse_value, const MetricConfig& cfg, const Tensor* batch) {
    double peak = cfg.max_value;
    switch (cfg.mode) {
        case PsnrMaxMode::constant:
            break;
        case PsnrMaxMode::per_batch_max:
            if (batch == nullptr) {
                throw ConfigError("per_batch_max PSNR needs the reference batch");
            }
            peak = 0.0;
            for (float v : batch->data()) {
                peak = std::max(peak, std::abs(static_cast<double>(v)));
            }
            break;
        case PsnrMaxMode::peak_to_peak:
            peak = 510.0;
            break;
    }
    if (!(peak > 0.0)) {
        throw ConfigError("PSNR peak value must be positive, got " + std::to_string(peak));
    }
    if (!(mse_value >= 0.0)) {
        throw InputError("PSNR of a negative or NaN MSE");
    }
    if (mse_value == 0.0) {
        return kPsnrInfinity;
    }
    return 10.0 * std::log10(peak * peak / mse_value);
}

double percent_delta(double trifusion_value, double cnn_value) {
    if (cnn_value == 0.0) {
        throw InputError("percent_delta: baseline value is zero");
    }
    return 100.0 * (trifusion_value - cnn_value) / cnn_value;
}

}  // namespace trifusion
