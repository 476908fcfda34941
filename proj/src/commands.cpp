#include "ctrlp/commands.hpp"

#include "ctrlp/checkpoint.hpp"
#include "ctrlp/cross_validation.hpp"
#include "ctrlp/error.hpp"
#include "ctrlp/gradient_check.hpp"
#include "ctrlp/seeding.hpp"
#include "ctrlp/text.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

namespace ctrlp {

namespace {

std::unique_ptr<std::ofstream> open_output(const std::string& path) {
    if (path.empty()) return nullptr;
    auto f = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*f) throw DataError("cannot write " + path);
    return f;
}

Dataset load_required(const ResolvedConfig& config) {
    if (config.data.empty()) throw UsageError("--data is required");
    return load_dataset(config.data);
}

void emit_report(const nlohmann::json& report, const ResolvedConfig& config, std::ostream& out) {
    const std::string text = report.dump(2);
    if (auto f = open_output(config.report)) *f << text << "\n";
    else out << text << "\n";
}

nlohmann::json seeds_json(const ResolvedConfig& config, const MetricsReport& report) {
    nlohmann::json per_fold = nlohmann::json::array();
    for (const auto& f : report.folds) per_fold.push_back(f.seed);
    return {{"fold_plan", config.seed}, {"model", config.model_seed}, {"per_fold", per_fold}};
}

std::vector<int> selected_folds(const ResolvedConfig& config) {
    if (config.fold >= 0) return {config.fold};
    return {};
}

StepCallback step_logger(std::ostream* log, std::ostream& err, std::size_t every, std::uint64_t max_steps, int fold) {
    return [log, &err, every, max_steps, fold](const StepLog& s) {
        if (log) {
            nlohmann::json j = {{"step", s.step}, {"lr", s.lr}, {"loss", s.loss}, {"mse", s.mse}};
            if (fold >= 0) j["fold"] = fold;
            *log << j.dump() << "\n";
        }
        if (every > 0 && (s.step % every == 0 || s.step + 1 == max_steps))
            err << "step " << s.step + 1 << "/" << max_steps << "  lr " << s.lr << "  loss " << s.loss << std::endl;
    };
}

} // namespace

int cmd_cv(const ResolvedConfig& config, std::ostream& out, std::ostream& err) {
    const Dataset dataset = load_required(config);
    const FoldPlan plan = make_patient_folds(dataset, config.folds, config.seed);
    auto log = open_output(config.log);

    FoldLogger logger;
    if (config.parallel_folds == 1) // parallel folds would interleave their progress lines
        logger = [&](int fold) { return step_logger(log.get(), err, config.log_every, config.train.max_steps, fold); };
    FoldRunner cnn = cnn_runner(config.train, config.model_seed, logger);
    FoldRunner runner = [&](const Dataset& d, std::span<const std::size_t> train, std::span<const std::size_t> test,
                            int fold) {
        err << "fold " << fold << ": " << train.size() << " train / " << test.size() << " test rows" << std::endl;
        return cnn(d, train, test, fold);
    };

    const auto folds = selected_folds(config);
    const MetricsReport report = cross_validate(dataset, plan, runner, folds, config.parallel_folds);
    emit_report(report_to_json(report, config.entries, seeds_json(config, report)), config, out);
    return exit_code::ok;
}

int cmd_baseline(const ResolvedConfig& config, std::ostream& out, std::ostream& err) {
    const Dataset dataset = load_required(config);
    const FoldPlan plan = make_patient_folds(dataset, config.folds, config.seed);
    FoldRunner knn = knn_runner(config.knn, config.train.norm);
    FoldRunner runner = [&](const Dataset& d, std::span<const std::size_t> train, std::span<const std::size_t> test,
                            int fold) {
        err << "fold " << fold << ": knn k=" << config.knn.k << " over " << train.size() << " train rows"
            << std::endl;
        return knn(d, train, test, fold);
    };
    const MetricsReport report = cross_validate(dataset, plan, runner, selected_folds(config), config.parallel_folds);
    emit_report(report_to_json(report, config.entries, seeds_json(config, report)), config, out);
    return exit_code::ok;
}

int cmd_train(const ResolvedConfig& config, std::ostream& out, std::ostream& err) {
    if (config.out.empty()) throw UsageError("--out is required");
    const Dataset dataset = load_required(config);

    std::vector<std::size_t> rows;
    if (config.fold >= 0) {
        rows = make_patient_folds(dataset, config.folds, config.seed).train_rows(dataset, config.fold);
    } else {
        rows.resize(dataset.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    }

    auto log = open_output(config.log.empty() ? config.out + ".log.jsonl" : config.log);
    TrainedModel trained = train_network(dataset, rows, config.train, config.model_seed,
                                         step_logger(log.get(), err, config.log_every, config.train.max_steps, -1));
    save_checkpoint(config.out, trained.model, trained.normalizer, trained.steps, config.entries);

    const auto pred = predict_rows(trained.model, trained.normalizer, dataset, trained.rows);
    double sq = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - dataset.target(trained.rows[i]);
        sq += r * r;
    }
    nlohmann::json summary = {
        {"checkpoint", config.out},
        {"steps", trained.steps},
        {"train_rows", trained.rows.size()},
        {"train_mse_cm2", sq / static_cast<double>(pred.size())},
        {"train_seconds", trained.seconds},
        {"model_seed", config.model_seed},
    };
    out << summary.dump(2) << "\n";
    return exit_code::ok;
}

std::vector<std::vector<float>> read_feature_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::vector<float>> rows;
    std::string line;
    std::size_t line_no = 0, row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        const auto cells = text::split(trimmed, ',');
        std::vector<double> values;
        values.reserve(cells.size());
        bool numeric = true;
        for (const auto& c : cells) {
            double v = 0;
            auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
            if (c.empty() || ec != std::errc() || ptr != c.data() + c.size()) {
                numeric = false;
                break;
            }
            values.push_back(v);
        }
        if (!numeric && line_no == 1) continue; // header
        ++row;
        if (!numeric) throw DataError("row " + std::to_string(row) + ": non-numeric value");
        std::vector<float> features;
        if (values.size() == kFeatureCount) {
            features.assign(values.begin(), values.end());
        } else if (values.size() == kCsvColumns) {
            features.assign(values.begin() + 1, values.end() - 1);
        } else {
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(kFeatureCount) +
                            " feature values, found " + std::to_string(values.size()));
        }
        rows.push_back(std::move(features));
    }
    if (rows.empty()) throw DataError(path.string() + ": no rows to predict");
    return rows;
}

int cmd_predict(const ResolvedConfig& config, std::ostream& out, std::ostream& err) {
    if (config.checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (config.data.empty()) throw UsageError("--data is required");
    Checkpoint ckpt = load_checkpoint(config.checkpoint);
    if (ckpt.model.config().input_len != kFeatureCount)
        throw UsageError("checkpoint model expects " + std::to_string(ckpt.model.config().input_len) + " features");
    const auto rows = read_feature_rows(config.data);

    Tensor<float> batch({rows.size(), kFeatureCount});
    for (std::size_t i = 0; i < rows.size(); ++i)
        ckpt.normalizer.apply(rows[i], batch.values().subspan(i * kFeatureCount, kFeatureCount));

    const auto start = std::chrono::steady_clock::now();
    std::vector<float> predictions;
    predictions.reserve(rows.size());
    // one row at a time: the online use case, and per-row latency
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Tensor<float> one({1, kFeatureCount},
                          std::vector<float>(batch.data() + i * kFeatureCount, batch.data() + (i + 1) * kFeatureCount));
        predictions.push_back(ckpt.model.predict(one)[0]);
    }
    const double ms = 1000.0 * std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
                      static_cast<double>(rows.size());
    for (float p : predictions) out << text::format_double(p) << "\n";
    err << "predicted " << rows.size() << " rows, " << std::fixed << std::setprecision(3) << ms
        << " ms per sample" << std::endl;
    return exit_code::ok;
}

int cmd_gradcheck(const ResolvedConfig& config, std::ostream& out, std::ostream&) {
    GradientCheckOptions options;
    options.config = reduced_config();
    options.seed = config.model_seed;
    options.inject_conv_fault = config.inject_fault;
    const GradientCheckReport report = gradient_check(options);

    out << std::left << std::setw(20) << "layer" << std::setw(10) << "entries" << std::setw(10) << "skipped"
        << std::setw(14) << "max_rel_err" << "status\n";
    for (const auto& row : report.layers) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3e", row.max_rel_error);
        out << std::setw(20) << row.name << std::setw(10) << row.checked << std::setw(10) << row.skipped
            << std::setw(14) << buf
            << (row.max_rel_error < config.tolerance ? "ok" : "FAIL") << "\n";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", report.whole_model);
    out << std::setw(20) << "whole_model" << std::setw(20) << "" << std::setw(14) << buf
        << (report.passed(config.tolerance) ? "ok" : "FAIL") << "\n";
    return report.passed(config.tolerance) ? exit_code::ok : exit_code::verification;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::verification;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::verification;
    }
}

} // namespace ctrlp
