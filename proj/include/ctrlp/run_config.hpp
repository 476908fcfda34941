#pragma once

#include "ctrlp/knn.hpp"
#include "ctrlp/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ctrlp {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// Flat key=value run configuration. Every key has a default; unknown keys are
// rejected. Layering: defaults < config file < command-line flags.
class RunConfig {
public:
    RunConfig();

    // Throws UsageError for unknown keys.
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool is_set(const std::string& key) const { return explicitly_set_.contains(key); }

    // Lines of `key=value`; blank lines and '#' comments ignored.
    void merge_file(const std::filesystem::path& path);
    void merge_text(const std::string& text, const std::string& origin);

    // Every key with its resolved value, in a stable order.
    ConfigEntries entries() const;
    std::string to_text() const;

    static const std::vector<std::string>& keys();

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicitly_set_;
};

// Typed view of a RunConfig after validation.
struct ResolvedConfig {
    std::string data;
    std::string out;
    std::string report;
    std::string log;
    std::string checkpoint;
    std::uint64_t seed = 7;       // fold plan
    std::uint64_t model_seed = 1; // network init, batch order, dropout
    int folds = 5;
    int fold = -1; // cv: only this fold; train: hold this fold out. -1: all
    TrainConfig train;
    KnnConfig knn;
    double tolerance = 1e-4;
    bool inject_fault = false;
    std::size_t parallel_folds = 1;
    std::size_t log_every = 100;
    ConfigEntries entries; // fully resolved, for reports and checkpoints
};

ResolvedConfig resolve(const RunConfig& config);

} // namespace ctrlp
