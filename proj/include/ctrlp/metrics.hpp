#pragma once

#include <optional>
#include <span>

namespace ctrlp {

struct Metrics {
    double mdae = 0; // median absolute error
    double mae = 0;  // mean absolute error
    // sqrt(sum (p - y)^2 / sum (y - mean y)^2); empty when all targets are equal
    std::optional<double> rrmse;
};

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets);

} // namespace ctrlp
