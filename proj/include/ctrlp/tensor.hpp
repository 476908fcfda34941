#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ctrlp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Storage aligned for the widest SIMD loads, so vectorized kernels take the
// same path (and round identically) wherever the heap puts a buffer.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

// Dense row-major array. float for training, double for gradient checks.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Rank-3 accessors for [batch, channel, position] tensors.
    T& at(std::size_t b, std::size_t c, std::size_t i) {
        return data_[(b * shape_[1] + c) * shape_[2] + i];
    }
    const T& at(std::size_t b, std::size_t c, std::size_t i) const {
        return data_[(b * shape_[1] + c) * shape_[2] + i];
    }

    // Same data, new extents; the element count must not change.
    void reshape(Shape shape);
    void fill(T value);
    bool all_finite() const;

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    AlignedVector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace ctrlp
