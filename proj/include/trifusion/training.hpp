#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "trifusion/models.hpp"
#include "trifusion/scene.hpp"

namespace trifusion {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments for one parameter set, plus the step count.
struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::uint64_t t = 0;
};

AdamState make_adam_state(const NamedParams<float>& params);

/// One bias-corrected Adam update. `grads[i]` belongs to `params[i]`.
/// Increments state.t even when every gradient is zero.
void adam_step(AdamState& state, const NamedParams<float>& params, const std::vector<Tensor>& grads,
               const AdamOptions& options);

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 4;
    AdamOptions adam;
    std::uint64_t seed = 0;  ///< batch order
    /// Called after each epoch with (epoch, mean loss).
    std::function<void(std::size_t, double)> on_epoch;
};

struct TrainCurve {
    std::vector<double> epoch_loss;  ///< mean per-sample MSE of each epoch
    std::vector<double> step_loss;   ///< batch-mean MSE of each step
};

/// Trains on clean reconstruction MSE in place. InputError on an empty set;
/// NumericalError as soon as a loss is not finite.
TrainCurve train_cnn_ae(CnnAeParams& params, const std::vector<SceneSample>& data, const TrainOptions& options);
TrainCurve train_trifusion(TriFusionParams& params, const ModelDims& dims, const std::vector<SceneSample>& data,
                           const TrainOptions& options);

}  // namespace trifusion
