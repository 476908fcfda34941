#include "ctrlp/tensor.hpp"

#include "ctrlp/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace ctrlp {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    if (std::find(shape_.begin(), shape_.end(), std::size_t{0}) != shape_.end())
        throw UsageError("tensor extents must be positive: " + shape_string(shape_));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (shape_size(shape_) != data_.size())
        throw UsageError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
    if (shape_size(shape) != data_.size())
        throw UsageError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(data_.data(), static_cast<Eigen::Index>(data_.size()))
        .allFinite();
}

template class Tensor<float>;
template class Tensor<double>;

} // namespace ctrlp
