#pragma once

#include "ctrlp/tensor.hpp"

#include <string>

namespace ctrlp {

// A trainable tensor and its gradient buffer, owned by a layer.
template <typename T>
struct ParamSlot {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
    bool regularized = false; // receives the L2 penalty (weights only)
};

} // namespace ctrlp
