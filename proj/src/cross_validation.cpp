#include "ctrlp/cross_validation.hpp"

#include "ctrlp/error.hpp"
#include "ctrlp/seeding.hpp"

#include <algorithm>
#include <chrono>
#include <future>

namespace ctrlp {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::json metrics_json(const Metrics& m) {
    return {{"mdae_cm", m.mdae}, {"mae_cm", m.mae}, {"rrmse", m.rrmse ? nlohmann::json(*m.rrmse) : nlohmann::json()}};
}

} // namespace

MetricsReport cross_validate(const Dataset& dataset, const FoldPlan& plan, const FoldRunner& runner,
                             std::span<const int> folds, std::size_t parallel) {
    std::vector<int> selected(folds.begin(), folds.end());
    if (selected.empty())
        for (int f = 0; f < plan.k; ++f) selected.push_back(f);

    const auto start = std::chrono::steady_clock::now();
    std::vector<std::vector<std::size_t>> train_sets, test_sets;
    for (int fold : selected) {
        if (fold < 0 || fold >= plan.k) throw UsageError("fold " + std::to_string(fold) + " out of range");
        train_sets.push_back(plan.train_rows(dataset, fold));
        test_sets.push_back(plan.test_rows(dataset, fold));
        if (train_sets.back().empty() || test_sets.back().empty())
            throw UsageError("fold " + std::to_string(fold) + " has an empty train or test set");
    }

    std::vector<FoldOutcome> outcomes(selected.size());
    if (parallel <= 1) {
        for (std::size_t i = 0; i < selected.size(); ++i)
            outcomes[i] = runner(dataset, train_sets[i], test_sets[i], selected[i]);
    } else {
        for (std::size_t wave = 0; wave < selected.size(); wave += parallel) {
            std::vector<std::future<FoldOutcome>> running;
            for (std::size_t i = wave; i < std::min(selected.size(), wave + parallel); ++i)
                running.push_back(std::async(std::launch::async, [&, i] {
                    return runner(dataset, train_sets[i], test_sets[i], selected[i]);
                }));
            for (std::size_t j = 0; j < running.size(); ++j) outcomes[wave + j] = running[j].get();
        }
    }

    MetricsReport report;
    std::vector<double> pooled_targets;
    double sum_mdae = 0, sum_mae = 0, sum_rrmse = 0;
    bool all_rrmse = true;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const int fold = selected[i];
        const auto& train = train_sets[i];
        const auto& test = test_sets[i];
        FoldOutcome& outcome = outcomes[i];
        if (outcome.predictions.size() != test.size())
            throw Error("fold runner returned " + std::to_string(outcome.predictions.size()) + " predictions for " +
                        std::to_string(test.size()) + " test rows");
        std::vector<double> targets(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) targets[i] = dataset.target(test[i]);

        FoldReport fr;
        fr.fold = fold;
        fr.test_patients = plan.patients_in(fold);
        fr.n_train = train.size();
        fr.n_test = test.size();
        fr.metrics = compute_metrics(outcome.predictions, targets);
        fr.seed = outcome.seed;
        fr.train_seconds = outcome.train_seconds;
        fr.infer_ms_per_sample = outcome.infer_ms_per_sample;
        sum_mdae += fr.metrics.mdae;
        sum_mae += fr.metrics.mae;
        if (fr.metrics.rrmse) sum_rrmse += *fr.metrics.rrmse;
        else all_rrmse = false;
        report.folds.push_back(std::move(fr));

        report.rows.insert(report.rows.end(), test.begin(), test.end());
        report.predictions.insert(report.predictions.end(), outcome.predictions.begin(), outcome.predictions.end());
        pooled_targets.insert(pooled_targets.end(), targets.begin(), targets.end());
    }
    report.aggregate = compute_metrics(report.predictions, pooled_targets);
    const double n = static_cast<double>(report.folds.size());
    report.fold_mean.mdae = sum_mdae / n;
    report.fold_mean.mae = sum_mae / n;
    if (all_rrmse) report.fold_mean.rrmse = sum_rrmse / n;
    report.total_seconds = seconds_since(start);
    return report;
}

FoldRunner cnn_runner(const TrainConfig& config, std::uint64_t model_seed, const FoldLogger& logger) {
    return [config, model_seed, logger](const Dataset& dataset, std::span<const std::size_t> train,
                                        std::span<const std::size_t> test, int fold) {
        const std::uint64_t seed = derive_seed(model_seed, static_cast<std::uint64_t>(fold));
        TrainedModel trained = train_network(dataset, train, config, seed, logger ? logger(fold) : StepCallback{});
        const auto start = std::chrono::steady_clock::now();
        FoldOutcome out;
        out.predictions = predict_rows(trained.model, trained.normalizer, dataset, test);
        out.infer_ms_per_sample = 1000.0 * seconds_since(start) / static_cast<double>(test.size());
        out.train_seconds = trained.seconds;
        out.seed = seed;
        return out;
    };
}

FoldRunner knn_runner(const KnnConfig& config, NormMode norm) {
    return [config, norm](const Dataset& dataset, std::span<const std::size_t> train,
                          std::span<const std::size_t> test, int) {
        const auto start = std::chrono::steady_clock::now();
        const Normalizer normalizer = fit_normalizer(dataset, train, norm);
        KnnIndex index;
        index.dim = kFeatureCount;
        index.points.reserve(train.size() * kFeatureCount);
        std::vector<float> buf(kFeatureCount);
        for (std::size_t r : train) {
            normalizer.apply(dataset.features(r), buf);
            index.points.insert(index.points.end(), buf.begin(), buf.end());
            index.targets.push_back(dataset.target(r));
        }
        FoldOutcome out;
        out.train_seconds = seconds_since(start);

        const auto infer_start = std::chrono::steady_clock::now();
        std::vector<double> query(kFeatureCount);
        out.predictions.reserve(test.size());
        for (std::size_t r : test) {
            normalizer.apply(dataset.features(r), buf);
            std::copy(buf.begin(), buf.end(), query.begin());
            out.predictions.push_back(knn_predict(index, query, config));
        }
        out.infer_ms_per_sample = 1000.0 * seconds_since(infer_start) / static_cast<double>(test.size());
        return out;
    };
}

nlohmann::json report_to_json(const MetricsReport& report,
                              const std::vector<std::pair<std::string, std::string>>& config,
                              const nlohmann::json& seeds) {
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& [k, v] : config) cfg[k] = v;

    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : report.folds) {
        nlohmann::json j = metrics_json(f.metrics);
        j["fold"] = f.fold;
        j["test_patients"] = f.test_patients;
        j["n_train"] = f.n_train;
        j["n_test"] = f.n_test;
        j["seed"] = f.seed;
        j["train_seconds"] = f.train_seconds;
        j["infer_ms_per_sample"] = f.infer_ms_per_sample;
        folds.push_back(std::move(j));
    }

    // Reference numbers of methods evaluated elsewhere on the same dataset.
    nlohmann::json published = nlohmann::json::array({
        {{"method", "KNN"}, {"mae_cm", 1.80}},
        {{"method", "Random Forest"}, {"rrmse", 0.28}},
        {{"method", "Anisotropic diffusion KNN"}, {"mdae_cm", 1.65}},
        {{"method", "Random subspace KNN"}, {"mdae_cm", 1.22}},
        {{"method", "Local search genetic programming"}, {"mdae_cm", 3.44}},
        {{"method", "1D-CNN (reported)"}, {"mdae_cm", 1.04}, {"mae_cm", 1.69}, {"rrmse", 0.15}},
    });

    return {
        {"config", cfg},
        {"seeds", seeds},
        {"folds", folds},
        {"aggregate", metrics_json(report.aggregate)},
        {"fold_mean", metrics_json(report.fold_mean)},
        {"n_predictions", report.predictions.size()},
        {"timing", {{"total_seconds", report.total_seconds}}},
        {"published_comparators", published},
    };
}

nlohmann::json strip_timing(nlohmann::json report) {
    report.erase("timing");
    for (auto& f : report["folds"]) {
        f.erase("train_seconds");
        f.erase("infer_ms_per_sample");
    }
    return report;
}

} // namespace ctrlp
