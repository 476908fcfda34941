#include "ctrlp/layers.hpp"

#include "ctrlp/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace ctrlp {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
    if (shape.size() != rank)
        throw UsageError(std::string(what) + ": expected rank " + std::to_string(rank) + " input, got " +
                         shape_string(shape));
}

void require_shape(const Shape& got, const Shape& want, const char* what) {
    if (got != want)
        throw UsageError(std::string(what) + ": gradient shape " + shape_string(got) + " does not match " +
                         shape_string(want));
}

} // namespace

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
    if (kernel == 0 || stride == 0) throw UsageError("kernel length and stride must be at least 1");
    if (length < kernel)
        throw UsageError("input length " + std::to_string(length) + " is shorter than kernel " +
                         std::to_string(kernel));
    return (length - kernel) / stride + 1;
}

// --- conv1d ----------------------------------------------------------------

template <typename T>
Forward<T, ConvCache<T>> conv1d_forward(const Tensor<T>& input, const ConvParams<T>& params, Mode mode) {
    require_rank(input.shape(), 3, "conv1d");
    const std::size_t batch = input.dim(0), in_ch = input.dim(1), len = input.dim(2);
    const std::size_t out_ch = params.weights.dim(0), kernel = params.weights.dim(2);
    if (params.weights.dim(1) != in_ch)
        throw UsageError("conv1d: input has " + std::to_string(in_ch) + " channels, weights expect " +
                         std::to_string(params.weights.dim(1)));
    const std::size_t stride = params.stride;
    const std::size_t out_len = conv_output_length(len, kernel, stride);
    const std::size_t patch = in_ch * kernel;
    const std::size_t cols = batch * out_len;

    // im2col over the whole batch: row (c, k), column (b, i)
    Tensor<T> columns({patch, cols});
    for (std::size_t c = 0; c < in_ch; ++c)
        for (std::size_t k = 0; k < kernel; ++k) {
            T* row = columns.data() + (c * kernel + k) * cols;
            for (std::size_t b = 0; b < batch; ++b) {
                const T* src = input.data() + (b * in_ch + c) * len + k;
                T* dst = row + b * out_len;
                for (std::size_t i = 0; i < out_len; ++i) dst[i] = src[i * stride];
            }
        }

    RowMatrix<T> product(out_ch, cols);
    product.noalias() = ConstMatrixMap<T>(params.weights.data(), out_ch, patch) *
                        ConstMatrixMap<T>(columns.data(), patch, cols);
    Tensor<T> output({batch, out_ch, out_len});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_ch; ++o) {
            const T* src = product.data() + o * cols + b * out_len;
            T* dst = output.data() + (b * out_ch + o) * out_len;
            const T bias = params.bias[o];
            for (std::size_t i = 0; i < out_len; ++i) dst[i] = src[i] + bias;
        }

    Forward<T, ConvCache<T>> result{std::move(output), {}};
    if (mode == Mode::train) result.cache = {input.shape(), std::move(columns)};
    return result;
}

template <typename T>
Backward<T, ConvGrads<T>> conv1d_backward(const ConvParams<T>& params, const ConvCache<T>& cache,
                                          const Tensor<T>& grad_out) {
    if (cache.columns.empty()) throw UsageError("conv1d backward: missing forward cache");
    const std::size_t batch = cache.input_shape[0], in_ch = cache.input_shape[1], len = cache.input_shape[2];
    const std::size_t out_ch = params.weights.dim(0), kernel = params.weights.dim(2);
    const std::size_t patch = in_ch * kernel;
    const std::size_t cols = cache.columns.dim(1);
    const std::size_t out_len = cols / batch;
    require_shape(grad_out.shape(), {batch, out_ch, out_len}, "conv1d backward");

    Backward<T, ConvGrads<T>> result{Tensor<T>(cache.input_shape),
                                     {Tensor<T>(params.weights.shape()), Tensor<T>(params.bias.shape())}};
    using Strided = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;
    ConstMatrixMap<T> w(params.weights.data(), out_ch, patch);
    MatrixMap<T> grad_w(result.grads.weights.data(), out_ch, patch);
    RowMatrix<T> grad_col(patch, out_len);
    // Per-sample products keep the working set in cache.
    for (std::size_t b = 0; b < batch; ++b) {
        Strided col(cache.columns.data() + b * out_len, patch, out_len, Eigen::OuterStride<>(cols));
        ConstMatrixMap<T> g(grad_out.data() + b * out_ch * out_len, out_ch, out_len);
        grad_w.noalias() += g * col.transpose();
        for (std::size_t o = 0; o < out_ch; ++o) result.grads.bias[o] += g.row(static_cast<Eigen::Index>(o)).sum();
        grad_col.noalias() = w.transpose() * g;
        for (std::size_t c = 0; c < in_ch; ++c)
            for (std::size_t k = 0; k < kernel; ++k) {
                const T* src = grad_col.data() + (c * kernel + k) * out_len;
                T* dst = result.grad_input.data() + (b * in_ch + c) * len + k;
                for (std::size_t i = 0; i < out_len; ++i) dst[i * params.stride] += src[i];
            }
    }
    return result;
}

// --- batch normalization ----------------------------------------------------

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t channels, double momentum, double eps) {
    if (eps <= 0) throw UsageError("batchnorm eps must be positive");
    if (momentum <= 0 || momentum >= 1) throw UsageError("batchnorm momentum must be in (0, 1)");
    return {Tensor<T>({channels}, T{1}), Tensor<T>({channels}, T{0}), Tensor<T>({channels}, T{0}),
            Tensor<T>({channels}, T{1}), momentum, eps};
}

template <typename T>
Forward<T, BatchNormCache<T>> batchnorm_forward(const Tensor<T>& input, BatchNormParams<T>& params, Mode mode) {
    require_rank(input.shape(), 3, "batchnorm");
    const std::size_t batch = input.dim(0), channels = input.dim(1), len = input.dim(2);
    if (params.gamma.size() != channels)
        throw UsageError("batchnorm: input has " + std::to_string(channels) + " channels, parameters expect " +
                         std::to_string(params.gamma.size()));
    const std::size_t count = batch * len;

    Forward<T, BatchNormCache<T>> result{Tensor<T>(input.shape()), {}};
    if (mode == Mode::infer) {
        for (std::size_t c = 0; c < channels; ++c) {
            const T scale = params.gamma[c] / std::sqrt(params.running_var[c] + static_cast<T>(params.eps));
            const T shift = params.beta[c] - scale * params.running_mean[c];
            for (std::size_t b = 0; b < batch; ++b) {
                const T* x = input.data() + (b * channels + c) * len;
                T* y = result.output.data() + (b * channels + c) * len;
                for (std::size_t i = 0; i < len; ++i) y[i] = scale * x[i] + shift;
            }
        }
        return result;
    }

    if (count < 2) throw UsageError("batchnorm: train mode needs at least 2 values per channel");
    result.cache.normalized = Tensor<T>(input.shape());
    result.cache.inv_std.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            const T* x = input.data() + (b * channels + c) * len;
            for (std::size_t i = 0; i < len; ++i) sum += x[i];
        }
        const double mean = sum / static_cast<double>(count);
        double sq = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            const T* x = input.data() + (b * channels + c) * len;
            for (std::size_t i = 0; i < len; ++i) sq += (x[i] - mean) * (x[i] - mean);
        }
        const double var = sq / static_cast<double>(count);
        const T inv_std = static_cast<T>(1.0 / std::sqrt(var + params.eps));
        result.cache.inv_std[c] = inv_std;
        const T m = static_cast<T>(mean);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * len;
            for (std::size_t i = 0; i < len; ++i) {
                const T xhat = (input[off + i] - m) * inv_std;
                result.cache.normalized[off + i] = xhat;
                result.output[off + i] = params.gamma[c] * xhat + params.beta[c];
            }
        }
        const T keep = static_cast<T>(params.momentum);
        params.running_mean[c] = keep * params.running_mean[c] + (T{1} - keep) * m;
        params.running_var[c] = keep * params.running_var[c] + (T{1} - keep) * static_cast<T>(var);
    }
    return result;
}

template <typename T>
Backward<T, BatchNormGrads<T>> batchnorm_backward(const BatchNormParams<T>& params,
                                                  const BatchNormCache<T>& cache, const Tensor<T>& grad_out) {
    if (cache.normalized.empty()) throw UsageError("batchnorm backward: missing forward cache");
    require_shape(grad_out.shape(), cache.normalized.shape(), "batchnorm backward");
    const std::size_t batch = grad_out.dim(0), channels = grad_out.dim(1), len = grad_out.dim(2);
    const double count = static_cast<double>(batch * len);

    Backward<T, BatchNormGrads<T>> result{Tensor<T>(grad_out.shape()),
                                          {Tensor<T>({channels}), Tensor<T>({channels})}};
    for (std::size_t c = 0; c < channels; ++c) {
        // sums of dy and dy * x_hat over the channel
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * len;
            for (std::size_t i = 0; i < len; ++i) {
                sum_dy += grad_out[off + i];
                sum_dy_xhat += grad_out[off + i] * cache.normalized[off + i];
            }
        }
        result.grads.gamma[c] = static_cast<T>(sum_dy_xhat);
        result.grads.beta[c] = static_cast<T>(sum_dy);
        const T g = params.gamma[c];
        const T scale = g * cache.inv_std[c];
        const T mean_dy = static_cast<T>(sum_dy / count);
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * len;
            for (std::size_t i = 0; i < len; ++i)
                result.grad_input[off + i] =
                    scale * (grad_out[off + i] - mean_dy - cache.normalized[off + i] * mean_dy_xhat);
        }
    }
    return result;
}

// --- max pooling ------------------------------------------------------------

template <typename T>
Forward<T, PoolCache> maxpool_forward(const Tensor<T>& input, std::size_t window, std::size_t stride, Mode mode) {
    require_rank(input.shape(), 3, "maxpool");
    const std::size_t batch = input.dim(0), channels = input.dim(1), len = input.dim(2);
    if (len < window)
        throw UsageError("maxpool: input length " + std::to_string(len) + " is shorter than window " +
                         std::to_string(window));
    const std::size_t out_len = conv_output_length(len, window, stride);

    Forward<T, PoolCache> result{Tensor<T>({batch, channels, out_len}), {}};
    std::vector<std::size_t> argmax(result.output.size());
    for (std::size_t row = 0; row < batch * channels; ++row) {
        const T* x = input.data() + row * len;
        for (std::size_t i = 0; i < out_len; ++i) {
            std::size_t best = i * stride;
            for (std::size_t w = 1; w < window; ++w)
                if (x[i * stride + w] > x[best]) best = i * stride + w;
            result.output[row * out_len + i] = x[best];
            argmax[row * out_len + i] = row * len + best;
        }
    }
    if (mode == Mode::train) result.cache = {input.shape(), std::move(argmax)};
    return result;
}

template <typename T>
Backward<T, NoGrads> maxpool_backward(const PoolCache& cache, const Tensor<T>& grad_out) {
    if (cache.argmax.empty()) throw UsageError("maxpool backward: missing forward cache");
    if (grad_out.size() != cache.argmax.size())
        throw UsageError("maxpool backward: gradient shape " + shape_string(grad_out.shape()) +
                         " does not match the cached output");
    Backward<T, NoGrads> result{Tensor<T>(cache.input_shape), {}};
    for (std::size_t i = 0; i < cache.argmax.size(); ++i) result.grad_input[cache.argmax[i]] += grad_out[i];
    return result;
}

// --- dense ------------------------------------------------------------------

template <typename T>
Forward<T, DenseCache<T>> dense_forward(const Tensor<T>& input, const DenseParams<T>& params, Mode mode) {
    require_rank(input.shape(), 2, "dense");
    const std::size_t batch = input.dim(0), in_dim = input.dim(1), out_dim = params.weights.dim(0);
    if (params.weights.dim(1) != in_dim)
        throw UsageError("dense: input width " + std::to_string(in_dim) + " does not match weights " +
                         shape_string(params.weights.shape()));
    Forward<T, DenseCache<T>> result{Tensor<T>({batch, out_dim}), {}};
    ConstMatrixMap<T> x(input.data(), batch, in_dim);
    ConstMatrixMap<T> w(params.weights.data(), out_dim, in_dim);
    MatrixMap<T> y(result.output.data(), batch, out_dim);
    y.noalias() = x * w.transpose();
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(params.bias.data(), out_dim);
    if (mode == Mode::train) result.cache.input = input;
    return result;
}

template <typename T>
Backward<T, DenseGrads<T>> dense_backward(const DenseParams<T>& params, const DenseCache<T>& cache,
                                          const Tensor<T>& grad_out) {
    if (cache.input.empty()) throw UsageError("dense backward: missing forward cache");
    const std::size_t batch = cache.input.dim(0), in_dim = cache.input.dim(1), out_dim = params.weights.dim(0);
    require_shape(grad_out.shape(), {batch, out_dim}, "dense backward");

    Backward<T, DenseGrads<T>> result{Tensor<T>(cache.input.shape()),
                                      {Tensor<T>(params.weights.shape()), Tensor<T>(params.bias.shape())}};
    ConstMatrixMap<T> x(cache.input.data(), batch, in_dim);
    ConstMatrixMap<T> w(params.weights.data(), out_dim, in_dim);
    ConstMatrixMap<T> g(grad_out.data(), batch, out_dim);
    MatrixMap<T>(result.grad_input.data(), batch, in_dim).noalias() = g * w;
    MatrixMap<T>(result.grads.weights.data(), out_dim, in_dim).noalias() = g.transpose() * x;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(result.grads.bias.data(), out_dim) = g.colwise().sum();
    return result;
}

// --- relu -------------------------------------------------------------------

template <typename T>
Forward<T, MaskCache> relu_forward(const Tensor<T>& input, Mode mode) {
    Forward<T, MaskCache> result{input, {}};
    for (auto& v : result.output.values())
        if (v < T{0}) v = T{0};
    if (mode == Mode::train) {
        result.cache.shape = input.shape();
        result.cache.active.resize(input.size());
        for (std::size_t i = 0; i < input.size(); ++i) result.cache.active[i] = input[i] > T{0};
    }
    return result;
}

template <typename T>
Backward<T, NoGrads> relu_backward(const MaskCache& cache, const Tensor<T>& grad_out) {
    if (cache.active.empty()) throw UsageError("relu backward: missing forward cache");
    require_shape(grad_out.shape(), cache.shape, "relu backward");
    Backward<T, NoGrads> result{grad_out, {}};
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        if (!cache.active[i]) result.grad_input[i] = T{0};
    return result;
}

// --- dropout ----------------------------------------------------------------

template <typename T>
Forward<T, DropoutCache<T>> dropout_forward(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout rate must be in [0, 1)");
    Forward<T, DropoutCache<T>> result{input, {}};
    if (mode == Mode::infer) return result;

    result.cache.scale = Tensor<T>(input.shape(), T{1});
    if (rate == 0.0) return result;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const T s = uniform(rng) < rate ? T{0} : keep_scale;
        result.cache.scale[i] = s;
        result.output[i] *= s;
    }
    return result;
}

template <typename T>
Backward<T, NoGrads> dropout_backward(const DropoutCache<T>& cache, const Tensor<T>& grad_out) {
    if (cache.scale.empty()) throw UsageError("dropout backward: missing forward cache");
    require_shape(grad_out.shape(), cache.scale.shape(), "dropout backward");
    Backward<T, NoGrads> result{grad_out, {}};
    for (std::size_t i = 0; i < grad_out.size(); ++i) result.grad_input[i] *= cache.scale[i];
    return result;
}

#define CTRLP_INSTANTIATE_LAYERS(T)                                                                          \
    template Forward<T, ConvCache<T>> conv1d_forward(const Tensor<T>&, const ConvParams<T>&, Mode);          \
    template Backward<T, ConvGrads<T>> conv1d_backward(const ConvParams<T>&, const ConvCache<T>&,            \
                                                       const Tensor<T>&);                                    \
    template struct BatchNormParams<T>;                                                                      \
    template Forward<T, BatchNormCache<T>> batchnorm_forward(const Tensor<T>&, BatchNormParams<T>&, Mode);   \
    template Backward<T, BatchNormGrads<T>> batchnorm_backward(const BatchNormParams<T>&,                    \
                                                               const BatchNormCache<T>&, const Tensor<T>&);  \
    template Forward<T, PoolCache> maxpool_forward(const Tensor<T>&, std::size_t, std::size_t, Mode);        \
    template Backward<T, NoGrads> maxpool_backward(const PoolCache&, const Tensor<T>&);                      \
    template Forward<T, DenseCache<T>> dense_forward(const Tensor<T>&, const DenseParams<T>&, Mode);         \
    template Backward<T, DenseGrads<T>> dense_backward(const DenseParams<T>&, const DenseCache<T>&,          \
                                                       const Tensor<T>&);                                    \
    template Forward<T, MaskCache> relu_forward(const Tensor<T>&, Mode);                                     \
    template Backward<T, NoGrads> relu_backward(const MaskCache&, const Tensor<T>&);                         \
    template Forward<T, DropoutCache<T>> dropout_forward(const Tensor<T>&, double, Mode, Rng&);              \
    template Backward<T, NoGrads> dropout_backward(const DropoutCache<T>&, const Tensor<T>&);

CTRLP_INSTANTIATE_LAYERS(float)
CTRLP_INSTANTIATE_LAYERS(double)

} // namespace ctrlp
