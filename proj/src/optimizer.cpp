#include "ctrlp/optimizer.hpp"

#include "ctrlp/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace ctrlp {

template <typename T>
LossResult<T> mse_l2_loss(std::span<const T> predictions, std::span<const T> targets,
                          std::span<const Tensor<T>* const> regularized, const LossConfig& config) {
    if (predictions.size() != targets.size())
        throw UsageError("loss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
    if (predictions.empty()) throw UsageError("loss: empty batch");
    if (config.l2_lambda < 0) throw UsageError("loss: lambda must be non-negative");

    const double n = static_cast<double>(predictions.size());
    LossResult<T> result;
    result.grad_predictions.resize(predictions.size());
    double sq = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = static_cast<double>(predictions[i]) - static_cast<double>(targets[i]);
        sq += r * r;
        result.grad_predictions[i] = static_cast<T>(2.0 * r / n);
    }
    result.mse = sq / n;
    if (config.l2_lambda > 0) {
        double w2 = 0;
        for (const Tensor<T>* w : regularized)
            w2 += Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(w->data(), static_cast<Eigen::Index>(w->size()))
                      .template cast<double>()
                      .square()
                      .sum();
        result.l2 = config.l2_lambda * w2;
    }
    result.loss = result.mse + result.l2;
    if (!std::isfinite(result.loss)) throw NumericError("loss is not finite");
    return result;
}

template <typename T>
void add_l2_gradient(std::span<const ParamSlot<T>> params, const LossConfig& config) {
    if (config.l2_lambda == 0) return;
    const T factor = static_cast<T>(2.0 * config.l2_lambda);
    for (const auto& slot : params) {
        if (!slot.regularized) continue;
        const auto n = static_cast<Eigen::Index>(slot.value->size());
        Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(slot.grad->data(), n) +=
            factor * Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(slot.value->data(), n);
    }
}

double lr_at_step(const AdamConfig& config, std::uint64_t step) {
    if (config.decay_step == 0) return config.base_lr;
    return config.base_lr * std::pow(config.decay_rate, static_cast<double>(step / config.decay_step));
}

template <typename T>
void adam_step(std::span<const ParamSlot<T>> params, OptimizerState<T>& state) {
    if (state.m.empty()) {
        for (const auto& slot : params) {
            state.m.emplace_back(slot.value->shape());
            state.v.emplace_back(slot.value->shape());
        }
    }
    if (state.m.size() != params.size()) throw UsageError("adam: parameter list changed between steps");
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& slot = params[p];
        if (slot.grad->shape() != slot.value->shape() || state.m[p].shape() != slot.value->shape())
            throw UsageError("adam: shape mismatch for " + slot.name);
        if (!slot.grad->all_finite())
            throw NumericError("adam: non-finite gradient in " + slot.name + " at step " +
                               std::to_string(state.step));
    }

    const AdamConfig& c = state.config;
    const double t = static_cast<double>(state.step + 1);
    const double lr = lr_at_step(c, state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    // lr * m_hat / (sqrt(v_hat) + eps) with both corrections folded into
    // scalars, so the elementwise part vectorizes in T.
    const T step_size = static_cast<T>(lr * std::sqrt(correction2) / correction1);
    const T eps_hat = static_cast<T>(c.epsilon * std::sqrt(correction2));
    const T beta1 = static_cast<T>(c.beta1), beta2 = static_cast<T>(c.beta2);
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto n = static_cast<Eigen::Index>(params[p].value->size());
        Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> theta(params[p].value->data(), n);
        Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> g(params[p].grad->data(), n);
        Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> m(state.m[p].data(), n);
        Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> v(state.v[p].data(), n);
        m = beta1 * m + (T{1} - beta1) * g;
        v = beta2 * v + (T{1} - beta2) * g.square();
        theta -= step_size * m / (v.sqrt() + eps_hat);
    }
    ++state.step;
}

template LossResult<float> mse_l2_loss(std::span<const float>, std::span<const float>,
                                       std::span<const Tensor<float>* const>, const LossConfig&);
template LossResult<double> mse_l2_loss(std::span<const double>, std::span<const double>,
                                        std::span<const Tensor<double>* const>, const LossConfig&);
template void add_l2_gradient(std::span<const ParamSlot<float>>, const LossConfig&);
template void add_l2_gradient(std::span<const ParamSlot<double>>, const LossConfig&);
template void adam_step(std::span<const ParamSlot<float>>, OptimizerState<float>&);
template void adam_step(std::span<const ParamSlot<double>>, OptimizerState<double>&);

} // namespace ctrlp
