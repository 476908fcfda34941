#pragma once

#include "ctrlp/run_config.hpp"

#include <functional>
#include <iosfwd>

namespace ctrlp {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int verification = 1; // failed check, non-finite training
inline constexpr int usage = 2;
inline constexpr int io = 3; // unreadable input, malformed data
} // namespace exit_code

// Each command writes its primary output (JSON report, predictions, table) to
// `out` and progress or diagnostics to `err`.
int cmd_cv(const ResolvedConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const ResolvedConfig& config, std::ostream& out, std::ostream& err);
int cmd_predict(const ResolvedConfig& config, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const ResolvedConfig& config, std::ostream& out, std::ostream& err);
int cmd_baseline(const ResolvedConfig& config, std::ostream& out, std::ostream& err);

// Maps library exceptions to exit codes, printing the message to `err`.
int run_guarded(const std::function<int()>& body, std::ostream& err);

// Feature rows for prediction: 384 raw values, or a full dataset row
// (patient, 384 features, target). An optional header line is skipped.
std::vector<std::vector<float>> read_feature_rows(const std::filesystem::path& path);

} // namespace ctrlp
