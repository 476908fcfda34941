#pragma once

#include "ctrlp/data.hpp"
#include "ctrlp/model.hpp"
#include "ctrlp/optimizer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ctrlp {

struct TrainConfig {
    ModelConfig model;
    AdamConfig adam;
    LossConfig loss;
    std::size_t batch_size = 256;
    std::uint64_t max_steps = 40000;
    NormMode norm = NormMode::per_feature;
    std::size_t train_subsample = 0; // 0: use every training row
};

struct StepLog {
    std::uint64_t step = 0; // 0-based index of the update
    double lr = 0;
    double loss = 0; // batch loss (MSE + L2) before the update
    double mse = 0;
};

using StepCallback = std::function<void(const StepLog&)>;

struct TrainedModel {
    ModelNet<float> model;
    Normalizer normalizer;
    std::uint64_t steps = 0;
    std::vector<std::size_t> rows; // dataset rows actually trained on
    double seconds = 0;
};

// Fits the normalizer on the training rows, builds a fresh model and runs
// `max_steps` Adam updates over reshuffled mini-batches. All randomness
// (subsample, init, batch order, dropout) derives from `seed`.
// Throws NumericError naming the step if the loss or a gradient goes non-finite.
TrainedModel train_network(const Dataset& dataset, std::span<const std::size_t> rows, const TrainConfig& config,
                           std::uint64_t seed, const StepCallback& on_step = {});

// Seed of the initial weights for a run seeded with `seed`.
std::uint64_t init_seed(std::uint64_t seed);

// Normalized [rows, width] batch.
Tensor<float> make_batch(const Dataset& dataset, std::span<const std::size_t> rows, const Normalizer& normalizer);

// Infer-mode predictions (cm) for `rows`, evaluated in chunks.
std::vector<double> predict_rows(ModelNet<float>& model, const Normalizer& normalizer, const Dataset& dataset,
                                 std::span<const std::size_t> rows, std::size_t chunk = 512);

} // namespace ctrlp
