#include "ctrlp/knn.hpp"

#include "ctrlp/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <string>
#include <utility>

namespace ctrlp {

double knn_predict(const KnnIndex& train, std::span<const double> query, const KnnConfig& config) {
    const std::size_t n = train.size();
    if (n == 0) throw UsageError("knn: empty training set");
    if (config.k == 0 || config.k > n)
        throw UsageError("knn: k=" + std::to_string(config.k) + " out of range for " + std::to_string(n) +
                         " training points");
    if (query.size() != train.dim)
        throw UsageError("knn: query has " + std::to_string(query.size()) + " features, index has " +
                         std::to_string(train.dim));

    using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Points> points(train.points.data(), static_cast<Eigen::Index>(n),
                                    static_cast<Eigen::Index>(train.dim));
    Eigen::Map<const Eigen::RowVectorXd> q(query.data(), static_cast<Eigen::Index>(train.dim));
    const Eigen::VectorXd sq = (points.rowwise() - q).rowwise().squaredNorm();

    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = {sq[static_cast<Eigen::Index>(i)], i};
    // pair ordering: distance first, then index
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(config.k), dist.end());
    std::vector<std::size_t> nearest(config.k);
    for (std::size_t i = 0; i < config.k; ++i) nearest[i] = dist[i].second;
    std::sort(nearest.begin(), nearest.end());
    double sum = 0;
    for (std::size_t i : nearest) sum += train.targets[i];
    return sum / static_cast<double>(config.k);
}

} // namespace ctrlp
