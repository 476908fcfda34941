#include "ctrlp/training.hpp"

#include "ctrlp/error.hpp"
#include "ctrlp/seeding.hpp"

#include <algorithm>
#include <chrono>
#include <random>

namespace ctrlp {

namespace {

enum Stream : std::uint64_t { kSubsample = 1, kInit = 2, kBatches = 3, kDropout = 4 };

} // namespace

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, kInit); }

Tensor<float> make_batch(const Dataset& dataset, std::span<const std::size_t> rows, const Normalizer& normalizer) {
    Tensor<float> batch({rows.size(), kFeatureCount});
    for (std::size_t i = 0; i < rows.size(); ++i)
        normalizer.apply(dataset.features(rows[i]), batch.values().subspan(i * kFeatureCount, kFeatureCount));
    return batch;
}

TrainedModel train_network(const Dataset& dataset, std::span<const std::size_t> rows, const TrainConfig& config,
                           std::uint64_t seed, const StepCallback& on_step) {
    if (rows.empty()) throw UsageError("training set is empty");
    if (config.batch_size == 0) throw UsageError("batch size must be at least 1");
    if (config.model.input_len != kFeatureCount)
        throw UsageError("model input_len must be " + std::to_string(kFeatureCount) + " to train on this dataset");
    const auto start = std::chrono::steady_clock::now();

    std::vector<std::size_t> used(rows.begin(), rows.end());
    if (config.train_subsample > 0 && config.train_subsample < used.size()) {
        std::mt19937_64 rng(derive_seed(seed, kSubsample));
        std::shuffle(used.begin(), used.end(), rng);
        used.resize(config.train_subsample);
        std::sort(used.begin(), used.end());
    }

    Normalizer normalizer = fit_normalizer(dataset, used, config.norm);
    const Tensor<float> features = make_batch(dataset, used, normalizer);
    std::vector<float> targets(used.size());
    for (std::size_t i = 0; i < used.size(); ++i) targets[i] = static_cast<float>(dataset.target(used[i]));

    TrainedModel result{ModelNet<float>(config.model, init_seed(seed)), std::move(normalizer), 0, used, 0};
    ModelNet<float>& model = result.model;
    OptimizerState<float> opt{config.adam, 0, {}, {}};
    Rng dropout_rng(derive_seed(seed, kDropout));
    auto params = model.parameters();

    std::vector<std::size_t> local(used.size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;
    std::vector<float> batch_targets;
    for (std::uint64_t epoch = 0; opt.step < config.max_steps; ++epoch) {
        for (const auto& batch_rows : iterate_batches(local, config.batch_size, derive_seed(seed, kBatches), epoch)) {
            if (opt.step >= config.max_steps) break;
            Tensor<float> batch({batch_rows.size(), kFeatureCount});
            batch_targets.resize(batch_rows.size());
            for (std::size_t i = 0; i < batch_rows.size(); ++i) {
                std::copy_n(features.data() + batch_rows[i] * kFeatureCount, kFeatureCount,
                            batch.data() + i * kFeatureCount);
                batch_targets[i] = targets[batch_rows[i]];
            }
            const std::uint64_t step = opt.step;
            LossResult<float> loss;
            try {
                loss = model_gradients<float>(model, batch, batch_targets, config.loss, dropout_rng);
                adam_step<float>(params, opt);
            } catch (const NumericError& e) {
                throw NumericError("step " + std::to_string(step) + ": " + e.what());
            }
            if (on_step) on_step({step, lr_at_step(config.adam, step), loss.loss, loss.mse});
        }
    }
    result.steps = opt.step;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::vector<double> predict_rows(ModelNet<float>& model, const Normalizer& normalizer, const Dataset& dataset,
                                 std::span<const std::size_t> rows, std::size_t chunk) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t start = 0; start < rows.size(); start += chunk) {
        const auto part = rows.subspan(start, std::min(chunk, rows.size() - start));
        const Tensor<float> pred = model.predict(make_batch(dataset, part, normalizer));
        for (float p : pred.values()) out.push_back(p);
    }
    return out;
}

} // namespace ctrlp
