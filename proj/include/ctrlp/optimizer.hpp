#pragma once

#include "ctrlp/parameter.hpp"
#include "ctrlp/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ctrlp {

struct LossConfig {
    double l2_lambda = 1e-4;
};

template <typename T>
struct LossResult {
    double loss = 0;
    double mse = 0;
    double l2 = 0;
    std::vector<T> grad_predictions; // d loss / d prediction
};

// loss = mean squared error + lambda * sum of squared entries of `regularized`.
// Only the prediction gradient is returned; the L2 gradient is 2 * lambda * w.
template <typename T>
LossResult<T> mse_l2_loss(std::span<const T> predictions, std::span<const T> targets,
                          std::span<const Tensor<T>* const> regularized, const LossConfig& config);

// Adds 2 * lambda * w to the gradient of every regularized slot.
template <typename T>
void add_l2_gradient(std::span<const ParamSlot<T>> params, const LossConfig& config);

struct AdamConfig {
    double base_lr = 1e-4;
    std::uint64_t decay_step = 20000;
    double decay_rate = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Staircase decay: base_lr * decay_rate ^ floor(step / decay_step).
double lr_at_step(const AdamConfig& config, std::uint64_t step);

template <typename T>
struct OptimizerState {
    AdamConfig config;
    std::uint64_t step = 0; // updates applied so far
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
};

// One Adam update over all slots. The update with index `state.step` uses
// lr_at_step(state.step) and bias corrections for t = state.step + 1.
// Throws NumericError, leaving parameters and state untouched, if any
// gradient is non-finite.
template <typename T>
void adam_step(std::span<const ParamSlot<T>> params, OptimizerState<T>& state);

} // namespace ctrlp
