#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ctrlp {

// Shape-context descriptor length of the slice-localization dataset.
inline constexpr std::size_t kFeatureCount = 384;
// patient id + features + reference location
inline constexpr std::size_t kCsvColumns = kFeatureCount + 2;

struct Sample {
    int patient_id;
    std::span<const float> features;
    double target; // relative axial location, cm
};

// Row-ordered collection of samples with the features stored contiguously.
class Dataset {
public:
    void add(int patient_id, std::span<const float> features, double target);
    void reserve(std::size_t n);

    std::size_t size() const { return targets_.size(); }
    bool empty() const { return targets_.empty(); }

    Sample operator[](std::size_t i) const { return {patients_[i], features(i), targets_[i]}; }
    std::span<const float> features(std::size_t i) const {
        return {features_.data() + i * kFeatureCount, kFeatureCount};
    }
    double target(std::size_t i) const { return targets_[i]; }
    int patient(std::size_t i) const { return patients_[i]; }

    // Distinct patient ids, ascending.
    std::vector<int> patient_ids() const;

    Dataset subset(std::span<const std::size_t> indices) const;

private:
    std::vector<int> patients_;
    std::vector<float> features_;
    std::vector<double> targets_;
};

// Reads the CSV layout: header row, then `patient, f0..f383, target` per row.
// Columns are matched by position. Row numbers in errors are 1-based data rows.
Dataset load_dataset(const std::filesystem::path& path);

enum class NormMode : std::uint8_t { per_feature = 0, per_sample = 1 };

std::string to_string(NormMode mode);
NormMode parse_norm_mode(const std::string& text);

// A column (or, in per-sample mode, a vector) whose std falls below this
// gets std 1, so it is only centred.
inline constexpr double kMinStd = 1e-8;

struct Normalizer {
    NormMode mode = NormMode::per_feature;
    std::vector<float> mean; // per-feature mode only
    std::vector<float> std;

    // Identity normalizer over `width` features.
    static Normalizer identity(std::size_t width = kFeatureCount);

    void apply(std::span<const float> in, std::span<float> out) const;
    std::vector<float> apply(std::span<const float> in) const;
};

Normalizer fit_normalizer(const Dataset& train, NormMode mode);
Normalizer fit_normalizer(const Dataset& train, std::span<const std::size_t> rows, NormMode mode);

// Patient-level fold assignment.
struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::map<int, int> assignments; // patient id -> fold

    int fold_of(int patient_id) const;
    std::vector<int> patients_in(int fold) const;
    // Row indices of `dataset` whose patient is (test) or is not (train) in `fold`.
    std::vector<std::size_t> test_rows(const Dataset& dataset, int fold) const;
    std::vector<std::size_t> train_rows(const Dataset& dataset, int fold) const;
};

FoldPlan make_patient_folds(const Dataset& dataset, int k, std::uint64_t seed);

// One epoch of shuffled mini-batches over `sample_indices`; deterministic in
// (seed, epoch). The last batch may be short.
std::vector<std::vector<std::size_t>> iterate_batches(std::span<const std::size_t> sample_indices,
                                                      std::size_t batch_size, std::uint64_t seed,
                                                      std::uint64_t epoch);

} // namespace ctrlp
