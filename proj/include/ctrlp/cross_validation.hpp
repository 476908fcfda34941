#pragma once

#include "ctrlp/data.hpp"
#include "ctrlp/knn.hpp"
#include "ctrlp/metrics.hpp"
#include "ctrlp/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctrlp {

// What a fold runner hands back: one prediction per test row, in order.
struct FoldOutcome {
    std::vector<double> predictions;
    std::uint64_t seed = 0;
    double train_seconds = 0;
    double infer_ms_per_sample = 0;
};

using FoldRunner = std::function<FoldOutcome(const Dataset& dataset, std::span<const std::size_t> train_rows,
                                             std::span<const std::size_t> test_rows, int fold)>;

struct FoldReport {
    int fold = 0;
    std::vector<int> test_patients;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    Metrics metrics;
    std::uint64_t seed = 0;
    double train_seconds = 0;
    double infer_ms_per_sample = 0;
};

struct MetricsReport {
    std::vector<FoldReport> folds;
    Metrics aggregate; // pooled over every test prediction
    Metrics fold_mean; // unweighted mean of per-fold metrics
    std::vector<std::size_t> rows;   // pooled test rows, fold by fold
    std::vector<double> predictions; // aligned with rows
    double total_seconds = 0;
};

// Runs `runner` on each fold in `folds` (every fold when empty). With
// `parallel` > 1 up to that many folds run concurrently; results are
// assembled in fold order either way, so the report does not depend on it
// as long as the runner itself is deterministic per fold.
MetricsReport cross_validate(const Dataset& dataset, const FoldPlan& plan, const FoldRunner& runner,
                             std::span<const int> folds = {}, std::size_t parallel = 1);

// Per-fold training progress hook.
using FoldLogger = std::function<StepCallback(int fold)>;

// Fresh network per fold, seeded with derive_seed(model_seed, fold).
FoldRunner cnn_runner(const TrainConfig& config, std::uint64_t model_seed, const FoldLogger& logger = {});

// KNN over features normalized with statistics of the training rows.
FoldRunner knn_runner(const KnnConfig& config, NormMode norm);

// {config, seeds, folds, aggregate, fold_mean, timing, published_comparators}
nlohmann::json report_to_json(const MetricsReport& report,
                              const std::vector<std::pair<std::string, std::string>>& config,
                              const nlohmann::json& seeds);

// Copy of a report without wall-clock fields, for reproducibility checks.
nlohmann::json strip_timing(nlohmann::json report);

} // namespace ctrlp
