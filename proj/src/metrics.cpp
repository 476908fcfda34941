#include "ctrlp/metrics.hpp"

#include "ctrlp/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ctrlp {

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size())
        throw UsageError("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
    if (predictions.empty()) throw UsageError("metrics: no predictions");
    const std::size_t n = predictions.size();

    std::vector<double> abs_err(n);
    double sum_abs = 0, sum_sq = 0, sum_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = predictions[i] - targets[i];
        abs_err[i] = std::abs(r);
        sum_abs += abs_err[i];
        sum_sq += r * r;
        sum_y += targets[i];
    }

    Metrics m;
    const std::size_t mid = n / 2;
    std::nth_element(abs_err.begin(), abs_err.begin() + static_cast<std::ptrdiff_t>(mid), abs_err.end());
    m.mdae = abs_err[mid];
    if (n % 2 == 0) {
        const double lower = *std::max_element(abs_err.begin(), abs_err.begin() + static_cast<std::ptrdiff_t>(mid));
        m.mdae = 0.5 * (lower + m.mdae);
    }
    m.mae = sum_abs / static_cast<double>(n);

    const double mean_y = sum_y / static_cast<double>(n);
    double spread = 0;
    for (double y : targets) spread += (y - mean_y) * (y - mean_y);
    if (spread > 0) m.rrmse = std::sqrt(sum_sq / spread);
    return m;
}

} // namespace ctrlp
