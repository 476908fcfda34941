#pragma once

#include "ctrlp/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace ctrlp {

struct KnnConfig {
    std::size_t k = 5;
};

// Training points stored row-major in double precision.
struct KnnIndex {
    std::size_t dim = 0;
    AlignedVector<double> points;
    std::vector<double> targets;

    std::size_t size() const { return targets.size(); }
};

// Mean target of the k nearest training points (Euclidean); equal distances
// are broken by the lower training index.
double knn_predict(const KnnIndex& train, std::span<const double> query, const KnnConfig& config);

} // namespace ctrlp
