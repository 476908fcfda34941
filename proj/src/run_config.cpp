#include "ctrlp/run_config.hpp"

#include "ctrlp/error.hpp"
#include "ctrlp/text.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ctrlp {

namespace {

ConfigEntries default_entries() {
    ConfigEntries e = {
        {"data", ""},
        {"out", ""},
        {"report", ""},
        {"log", ""},
        {"checkpoint", ""},
        {"seed", "7"},
        {"model_seed", "1"},
        {"folds", "5"},
        {"fold", "-1"},
        {"max_steps", "40000"},
        {"batch_size", "256"},
        {"lambda", "0.0001"},
        {"lr", "0.0001"},
        {"decay_step", "20000"},
        {"decay_rate", "0.5"},
        {"beta1", "0.9"},
        {"beta2", "0.999"},
        {"epsilon", "1e-08"},
        {"norm", "per-feature"},
        {"train_subsample", "0"},
        {"k", "5"},
        {"tolerance", "0.0001"},
        {"inject_fault", "off"},
        {"parallel_folds", "1"},
        {"log_every", "100"},
    };
    for (auto& entry : to_entries(ModelConfig{})) e.push_back(std::move(entry));
    return e;
}

const ConfigEntries& defaults() {
    static const ConfigEntries d = default_entries();
    return d;
}

int parse_int(std::string_view s, std::string_view what) {
    s = text::trim(s);
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw UsageError(std::string(what) + ": '" + std::string(s) + "' is not an integer");
    return value;
}

} // namespace

RunConfig::RunConfig() {
    for (const auto& [k, v] : defaults()) values_[k] = v;
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& entry : defaults()) out.push_back(entry.first);
        return out;
    }();
    return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    it->second = std::string(text::trim(value));
    explicitly_set_.insert(key);
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    merge_text(buf.str(), path.string());
}

void RunConfig::merge_text(const std::string& content, const std::string& origin) {
    std::istringstream in(content);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string_view::npos)
            throw UsageError(origin + ":" + std::to_string(line_no) + ": expected key=value");
        set(std::string(text::trim(trimmed.substr(0, eq))), std::string(trimmed.substr(eq + 1)));
    }
}

ConfigEntries RunConfig::entries() const {
    ConfigEntries out;
    for (const auto& key : keys()) out.emplace_back(key, values_.at(key));
    return out;
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
    return out;
}

ResolvedConfig resolve(const RunConfig& config) {
    ResolvedConfig r;
    r.data = config.get("data");
    r.out = config.get("out");
    r.report = config.get("report");
    r.log = config.get("log");
    r.checkpoint = config.get("checkpoint");
    r.seed = text::parse_uint(config.get("seed"), "seed");
    r.model_seed = text::parse_uint(config.get("model_seed"), "model_seed");
    r.folds = parse_int(config.get("folds"), "folds");
    if (r.folds < 2) throw UsageError("folds must be at least 2, got " + std::to_string(r.folds));
    r.fold = parse_int(config.get("fold"), "fold");
    if (r.fold < -1 || r.fold >= r.folds)
        throw UsageError("fold must be -1 or in [0, " + std::to_string(r.folds) + ")");

    TrainConfig& t = r.train;
    for (const auto& [k, v] : config.entries()) apply_model_entry(t.model, k, v);
    validate(t.model);
    t.max_steps = text::parse_uint(config.get("max_steps"), "max_steps");
    t.batch_size = text::parse_uint(config.get("batch_size"), "batch_size");
    if (t.batch_size == 0) throw UsageError("batch_size must be at least 1");
    t.loss.l2_lambda = text::parse_double(config.get("lambda"), "lambda");
    if (t.loss.l2_lambda < 0) throw UsageError("lambda must be non-negative");
    t.adam.base_lr = text::parse_double(config.get("lr"), "lr");
    if (!(t.adam.base_lr > 0)) throw UsageError("lr must be positive");
    t.adam.decay_step = text::parse_uint(config.get("decay_step"), "decay_step");
    t.adam.decay_rate = text::parse_double(config.get("decay_rate"), "decay_rate");
    t.adam.beta1 = text::parse_double(config.get("beta1"), "beta1");
    t.adam.beta2 = text::parse_double(config.get("beta2"), "beta2");
    t.adam.epsilon = text::parse_double(config.get("epsilon"), "epsilon");
    if (!(t.adam.beta1 >= 0 && t.adam.beta1 < 1) || !(t.adam.beta2 >= 0 && t.adam.beta2 < 1))
        throw UsageError("beta1 and beta2 must be in [0, 1)");
    if (!(t.adam.epsilon > 0)) throw UsageError("epsilon must be positive");
    t.norm = parse_norm_mode(config.get("norm"));
    t.train_subsample = text::parse_uint(config.get("train_subsample"), "train_subsample");

    const int k = parse_int(config.get("k"), "k");
    if (k < 1) throw UsageError("k must be at least 1, got " + std::to_string(k));
    r.knn.k = static_cast<std::size_t>(k);
    r.tolerance = text::parse_double(config.get("tolerance"), "tolerance");
    r.inject_fault = text::parse_on_off(config.get("inject_fault"), "inject_fault");
    r.parallel_folds = text::parse_uint(config.get("parallel_folds"), "parallel_folds");
    if (r.parallel_folds == 0) throw UsageError("parallel_folds must be at least 1");
    r.log_every = text::parse_uint(config.get("log_every"), "log_every");
    r.entries = config.entries();
    return r;
}

} // namespace ctrlp
