#pragma once

#include "ctrlp/tensor.hpp"

#include <cstddef>
#include <random>
#include <vector>

namespace ctrlp {

enum class Mode { train, infer };

using Rng = std::mt19937_64;

// Forward kernels return the output plus whatever backward needs. Caches are
// only populated in train mode; backward on an empty cache throws.
template <typename T, typename Cache>
struct Forward {
    Tensor<T> output;
    Cache cache;
};

template <typename T, typename Grads>
struct Backward {
    Tensor<T> grad_input;
    Grads grads;
};

struct NoGrads {};

// ---------------------------------------------------------------------------
// conv1d: cross-correlation, VALID padding.
//   input [B, C_in, L] -> output [B, C_out, (L - K) / stride + 1]
// ---------------------------------------------------------------------------
template <typename T>
struct ConvParams {
    Tensor<T> weights; // [C_out, C_in, K]
    Tensor<T> bias;    // [C_out]
    std::size_t stride = 1;
};

template <typename T>
struct ConvCache {
    Shape input_shape;
    Tensor<T> columns; // im2col, [C_in * K, B * L_out]
};

template <typename T>
struct ConvGrads {
    Tensor<T> weights;
    Tensor<T> bias;
};

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

template <typename T>
Forward<T, ConvCache<T>> conv1d_forward(const Tensor<T>& input, const ConvParams<T>& params, Mode mode);
template <typename T>
Backward<T, ConvGrads<T>> conv1d_backward(const ConvParams<T>& params, const ConvCache<T>& cache,
                                          const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over (batch, position) per channel of a [B, C, L] tensor.
// running = momentum * running + (1 - momentum) * batch statistic.
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNormParams {
    Tensor<T> gamma; // [C]
    Tensor<T> beta;  // [C]
    Tensor<T> running_mean;
    Tensor<T> running_var;
    double momentum = 0.9;
    double eps = 1e-5;

    static BatchNormParams identity(std::size_t channels, double momentum = 0.9, double eps = 1e-5);
};

template <typename T>
struct BatchNormCache {
    Tensor<T> normalized; // x_hat
    std::vector<T> inv_std;
};

template <typename T>
struct BatchNormGrads {
    Tensor<T> gamma;
    Tensor<T> beta;
};

// Updates params.running_* in train mode.
template <typename T>
Forward<T, BatchNormCache<T>> batchnorm_forward(const Tensor<T>& input, BatchNormParams<T>& params, Mode mode);
template <typename T>
Backward<T, BatchNormGrads<T>> batchnorm_backward(const BatchNormParams<T>& params,
                                                  const BatchNormCache<T>& cache, const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Max pooling along the last axis of [B, C, L]; trailing elements that do not
// fill a window are dropped. Ties go to the lowest index.
// ---------------------------------------------------------------------------
struct PoolCache {
    Shape input_shape;
    std::vector<std::size_t> argmax; // flat input offsets, one per output element
};

template <typename T>
Forward<T, PoolCache> maxpool_forward(const Tensor<T>& input, std::size_t window, std::size_t stride, Mode mode);
template <typename T>
Backward<T, NoGrads> maxpool_backward(const PoolCache& cache, const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Fully connected: [B, in] -> [B, out], out = x W^T + b.
// ---------------------------------------------------------------------------
template <typename T>
struct DenseParams {
    Tensor<T> weights; // [out, in]
    Tensor<T> bias;    // [out]
};

template <typename T>
struct DenseCache {
    Tensor<T> input;
};

template <typename T>
struct DenseGrads {
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
Forward<T, DenseCache<T>> dense_forward(const Tensor<T>& input, const DenseParams<T>& params, Mode mode);
template <typename T>
Backward<T, DenseGrads<T>> dense_backward(const DenseParams<T>& params, const DenseCache<T>& cache,
                                          const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Elementwise layers.
// ---------------------------------------------------------------------------
struct MaskCache {
    Shape shape;
    std::vector<unsigned char> active;
};

template <typename T>
Forward<T, MaskCache> relu_forward(const Tensor<T>& input, Mode mode);
template <typename T>
Backward<T, NoGrads> relu_backward(const MaskCache& cache, const Tensor<T>& grad_out);

// Inverted dropout: survivors are scaled by 1 / (1 - rate); infer mode is the
// identity.
template <typename T>
struct DropoutCache {
    Tensor<T> scale; // 0 or 1 / (1 - rate) per element
};

template <typename T>
Forward<T, DropoutCache<T>> dropout_forward(const Tensor<T>& input, double rate, Mode mode, Rng& rng);
template <typename T>
Backward<T, NoGrads> dropout_backward(const DropoutCache<T>& cache, const Tensor<T>& grad_out);

} // namespace ctrlp
