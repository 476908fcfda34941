#include "ctrlp/data.hpp"

#include "ctrlp/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace ctrlp {

void Dataset::add(int patient_id, std::span<const float> features, double target) {
    if (features.size() != kFeatureCount)
        throw UsageError("sample has " + std::to_string(features.size()) + " features, expected " +
                         std::to_string(kFeatureCount));
    if (!std::isfinite(target)) throw UsageError("sample target is not finite");
    if (patient_id < 0) throw UsageError("patient id must be non-negative");
    patients_.push_back(patient_id);
    features_.insert(features_.end(), features.begin(), features.end());
    targets_.push_back(target);
}

void Dataset::reserve(std::size_t n) {
    patients_.reserve(n);
    features_.reserve(n * kFeatureCount);
    targets_.reserve(n);
}

std::vector<int> Dataset::patient_ids() const {
    std::set<int> ids(patients_.begin(), patients_.end());
    return {ids.begin(), ids.end()};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) throw UsageError("subset index out of range");
        out.add(patients_[i], features(i), targets_[i]);
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

bool parse_double(std::string_view cell, double& out) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    if (cell.empty()) return false;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

[[noreturn]] void row_error(std::size_t row, const std::string& what) {
    throw DataError("row " + std::to_string(row) + ": " + what);
}

} // namespace

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    if (trim(text).empty()) throw DataError(path.string() + ": empty file");

    Dataset dataset;
    std::vector<float> features(kFeatureCount);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    std::size_t row = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
        pos = end + 1;
        if (line_no++ == 0 || line.empty()) continue; // header

        ++row;
        std::size_t column = 0;
        int patient = 0;
        double target = 0;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string_view cell =
                line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
            if (column < kCsvColumns) {
                double value = 0;
                if (!parse_double(cell, value))
                    row_error(row, "non-numeric value in column " + std::to_string(column + 1));
                if (column == 0) {
                    if (value < 0 || value != std::floor(value) || value > 2147483647.0)
                        row_error(row, "patient id must be a non-negative integer");
                    patient = static_cast<int>(value);
                } else if (column == kCsvColumns - 1) {
                    target = value;
                } else {
                    features[column - 1] = static_cast<float>(value);
                }
            }
            ++column;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (column != kCsvColumns)
            row_error(row, "expected " + std::to_string(kCsvColumns) + " columns, found " +
                               std::to_string(column));
        dataset.add(patient, features, target);
    }
    if (dataset.empty()) throw DataError(path.string() + ": no data rows");
    return dataset;
}

std::string to_string(NormMode mode) {
    return mode == NormMode::per_feature ? "per-feature" : "per-sample";
}

NormMode parse_norm_mode(const std::string& text) {
    if (text == "per-feature") return NormMode::per_feature;
    if (text == "per-sample") return NormMode::per_sample;
    throw UsageError("unknown normalization mode '" + text + "' (per-feature|per-sample)");
}

Normalizer Normalizer::identity(std::size_t width) {
    return {NormMode::per_feature, std::vector<float>(width, 0.0f), std::vector<float>(width, 1.0f)};
}

void Normalizer::apply(std::span<const float> in, std::span<float> out) const {
    if (out.size() != in.size()) throw UsageError("normalizer output length mismatch");
    if (mode == NormMode::per_feature) {
        if (in.size() != mean.size())
            throw UsageError("normalizer expects " + std::to_string(mean.size()) + " features, got " +
                             std::to_string(in.size()));
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / std[j];
        return;
    }
    if (in.empty()) throw UsageError("cannot normalize an empty vector");
    double sum = 0;
    for (float v : in) sum += v;
    const double mu = sum / static_cast<double>(in.size());
    double sq = 0;
    for (float v : in) sq += (v - mu) * (v - mu);
    double sd = std::sqrt(sq / static_cast<double>(in.size()));
    if (sd < kMinStd) sd = 1.0;
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<float>((in[j] - mu) / sd);
}

std::vector<float> Normalizer::apply(std::span<const float> in) const {
    std::vector<float> out(in.size());
    apply(in, out);
    return out;
}

Normalizer fit_normalizer(const Dataset& train, NormMode mode) {
    std::vector<std::size_t> rows(train.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return fit_normalizer(train, rows, mode);
}

Normalizer fit_normalizer(const Dataset& train, std::span<const std::size_t> rows, NormMode mode) {
    if (rows.empty()) throw UsageError("cannot fit a normalizer on an empty dataset");
    Normalizer norm;
    norm.mode = mode;
    if (mode == NormMode::per_sample) return norm;

    std::vector<double> sum(kFeatureCount, 0.0);
    for (std::size_t r : rows) {
        auto x = train.features(r);
        for (std::size_t j = 0; j < kFeatureCount; ++j) sum[j] += x[j];
    }
    const double n = static_cast<double>(rows.size());
    std::vector<double> mu(kFeatureCount);
    for (std::size_t j = 0; j < kFeatureCount; ++j) mu[j] = sum[j] / n;
    // second pass for the centred sum of squares
    std::vector<double> sq(kFeatureCount, 0.0);
    for (std::size_t r : rows) {
        auto x = train.features(r);
        for (std::size_t j = 0; j < kFeatureCount; ++j) {
            const double d = x[j] - mu[j];
            sq[j] += d * d;
        }
    }
    norm.mean.resize(kFeatureCount);
    norm.std.resize(kFeatureCount);
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
        const double sd = std::sqrt(sq[j] / n);
        norm.mean[j] = static_cast<float>(mu[j]);
        norm.std[j] = sd < kMinStd ? 1.0f : static_cast<float>(sd);
    }
    return norm;
}

int FoldPlan::fold_of(int patient_id) const {
    auto it = assignments.find(patient_id);
    if (it == assignments.end()) throw UsageError("patient " + std::to_string(patient_id) + " has no fold");
    return it->second;
}

std::vector<int> FoldPlan::patients_in(int fold) const {
    std::vector<int> out;
    for (auto [patient, f] : assignments)
        if (f == fold) out.push_back(patient);
    return out;
}

std::vector<std::size_t> FoldPlan::test_rows(const Dataset& dataset, int fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (fold_of(dataset.patient(i)) == fold) rows.push_back(i);
    return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(const Dataset& dataset, int fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (fold_of(dataset.patient(i)) != fold) rows.push_back(i);
    return rows;
}

FoldPlan make_patient_folds(const Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) throw UsageError("fold count must be at least 2, got " + std::to_string(k));
    std::vector<int> patients = dataset.patient_ids();
    if (patients.size() < static_cast<std::size_t>(k))
        throw UsageError("cannot split " + std::to_string(patients.size()) + " patients into " +
                         std::to_string(k) + " folds");
    std::mt19937_64 rng(seed);
    std::shuffle(patients.begin(), patients.end(), rng);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    for (std::size_t i = 0; i < patients.size(); ++i)
        plan.assignments[patients[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return plan;
}

std::vector<std::vector<std::size_t>> iterate_batches(std::span<const std::size_t> sample_indices,
                                                      std::size_t batch_size, std::uint64_t seed,
                                                      std::uint64_t epoch) {
    if (batch_size == 0) throw UsageError("batch size must be at least 1");
    if (sample_indices.empty()) throw UsageError("cannot batch an empty sample set");
    std::vector<std::size_t> order(sample_indices.begin(), sample_indices.end());
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

} // namespace ctrlp
