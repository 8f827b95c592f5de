#include "trifusion/training.hpp"

#include <cmath>
#include <numeric>

#include "trifusion/ops.hpp"
#include "trifusion/random.hpp"

namespace trifusion {

AdamState make_adam_state(const NamedParams<float>& params) {
    AdamState s;
    for (const auto& [name, t] : params) {
        s.m.emplace_back(t->size(), 0.0f);
        s.v.emplace_back(t->size(), 0.0f);
    }
    return s;
}

void adam_step(AdamState& state, const NamedParams<float>& params, const std::vector<Tensor>& grads,
               const AdamOptions& o) {
    if (state.m.size() != params.size() || state.v.size() != params.size() || grads.size() != params.size()) {
        throw ContractError("adam_step: state, parameter and gradient counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = *params[i].second;
        if (state.m[i].size() != p.size() || state.v[i].size() != p.size() || grads[i].shape() != p.shape()) {
            throw ContractError("adam_step: shape mismatch for " + params[i].first);
        }
    }
    state.t += 1;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].second->mutable_data();
        auto g = grads[i].data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g[j];
            const double mj = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
            const double vj = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double step = o.lr * (mj / c1) / (std::sqrt(vj / c2) + o.eps);
            w[j] = static_cast<float>(w[j] - step);
        }
    }
}

namespace {

using SampleLoss = std::function<Tensor(const SceneSample&)>;

TrainCurve train_loop(const NamedParams<float>& params, const std::vector<SceneSample>& data,
                      const TrainOptions& options, const SampleLoss& loss_of) {
    if (data.empty()) {
        throw InputError("training set is empty");
    }
    if (options.batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    AdamState adam = make_adam_state(params);
    TrainCurve curve;
    std::vector<std::size_t> order(data.size());
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(options.seed, StreamPurpose::batch_order, epoch);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
        }
        double epoch_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            Tape<float> tape;
            std::vector<Tensor> leaves;
            leaves.reserve(params.size());
            for (const auto& [name, t] : params) {
                leaves.push_back(tape.watch(t->detach()));
                *t = leaves.back();
            }
            std::vector<Tensor> losses;
            double batch_sum = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                losses.push_back(loss_of(data[order[k]]));
                const double l = losses.back().item();
                if (!std::isfinite(l)) {
                    throw NumericalError("non-finite training loss " + std::to_string(l) + " at epoch " +
                                         std::to_string(epoch) + " on sample " + data[order[k]].id);
                }
                batch_sum += l;
            }
            const auto& total = losses.size() == 1 ? losses.front() : sum(concat(losses, 0));
            auto grads_map = tape.backward(scale(total, 1.0f / static_cast<float>(losses.size())));
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (const auto& leaf : leaves) {
                grads.push_back(grads_map.at(leaf));
            }
            for (const auto& [name, t] : params) {
                *t = t->detach();
            }
            adam_step(adam, params, grads, options.adam);
            epoch_sum += batch_sum;
            curve.step_loss.push_back(batch_sum / static_cast<double>(end - start));
        }
        curve.epoch_loss.push_back(epoch_sum / static_cast<double>(data.size()));
        if (options.on_epoch) {
            options.on_epoch(epoch, curve.epoch_loss.back());
        }
    }
    return curve;
}

}  // namespace

TrainCurve train_cnn_ae(CnnAeParams& params, const std::vector<SceneSample>& data, const TrainOptions& options) {
    return train_loop(named_params(params), data, options, [&](const SceneSample& s) {
        return mse_loss(cnn_ae_forward(params, s.lidar).recon, s.lidar);
    });
}

TrainCurve train_trifusion(TriFusionParams& params, const ModelDims& dims, const std::vector<SceneSample>& data,
                           const TrainOptions& options) {
    dims.validate();
    return train_loop(named_params(params), data, options, [&](const SceneSample& s) {
        return mse_loss(trifusion_forward<float>(params, dims, s.lidar, s.views, s.text_emb), s.lidar);
    });
}

}  // namespace trifusion
