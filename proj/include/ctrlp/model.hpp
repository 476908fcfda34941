#pragma once

#include "ctrlp/layers.hpp"
#include "ctrlp/optimizer.hpp"
#include "ctrlp/parameter.hpp"
#include "ctrlp/tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctrlp {

struct ConvSpec {
    std::size_t out_channels = 0;
    std::size_t kernel_len = 0;
    std::size_t stride = 1;
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

enum class InitScheme { he, fixed };

// Network topology and the knobs left open by the reference architecture.
// Defaults: dropout(0.2) -> 3 x [conv -> BN -> ReLU -> maxpool] -> FC1024 ->
// FC1024 -> FC1, each hidden FC followed by ReLU and dropout(0.5).
struct ModelConfig {
    std::size_t input_len = 384;
    std::vector<ConvSpec> convs{{32, 41, 1}, {64, 21, 1}, {128, 11, 1}};
    std::size_t pool_window = 2;
    std::size_t pool_stride = 2;
    std::vector<std::size_t> fc_dims{1024, 1024, 1};
    double input_dropout = 0.2;
    double fc_dropout = 0.5;
    InitScheme init = InitScheme::he;
    double init_std = 0.01; // used by InitScheme::fixed
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;
    bool output_relu = false;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Throws UsageError when the topology cannot be built (e.g. a kernel longer
// than its incoming length, or an output width other than 1).
void validate(const ModelConfig& config);

// Flat key=value view used by run configs and checkpoints.
std::vector<std::pair<std::string, std::string>> to_entries(const ModelConfig& config);
// Returns false if `key` is not a model key.
bool apply_model_entry(ModelConfig& config, const std::string& key, const std::string& value);

std::string format_init(const ModelConfig& config);

template <typename T>
class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    const std::string& name() const { return name_; }

    virtual Shape output_shape(const Shape& input) const = 0;
    virtual Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) = 0;
    // Gradient w.r.t. the input of the last train-mode forward; parameter
    // gradients are stored in the layer (overwritten, not accumulated).
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

    virtual std::vector<ParamSlot<T>> parameters() { return {}; }
    // Trainable parameters followed by non-trainable state (BN running stats).
    virtual std::vector<std::pair<std::string, Tensor<T>*>> state() { return {}; }
    // Hash of the piecewise-linear branch taken in the last train-mode forward
    // (ReLU masks, pool argmax); 0 for smooth layers.
    virtual std::uint64_t branch_hash() const { return 0; }

private:
    std::string name_;
};

template <typename T>
class ModelNet {
public:
    ModelNet(const ModelConfig& config, std::uint64_t seed);

    ModelNet(ModelNet&&) noexcept = default;
    ModelNet& operator=(ModelNet&&) noexcept = default;

    const ModelConfig& config() const { return config_; }

    // batch [B, input_len] -> predictions [B]
    Tensor<T> forward(const Tensor<T>& batch, Mode mode, Rng& rng);
    // Deterministic inference helper; dropout is inactive so no rng is used.
    Tensor<T> predict(const Tensor<T>& batch);
    // Backpropagates d loss / d predictions through the last train-mode forward.
    void backward(std::span<const T> grad_predictions);

    std::vector<ParamSlot<T>> parameters();
    std::vector<const Tensor<T>*> regularized_weights();
    std::size_t count_parameters() const;
    std::vector<std::pair<std::string, Tensor<T>*>> state();

    std::vector<std::unique_ptr<Layer<T>>>& layers() { return layers_; }
    Layer<T>& layer(const std::string& name);

    // (layer name, output shape) recorded during the most recent forward.
    const std::vector<std::pair<std::string, Shape>>& activation_shapes() const { return shapes_; }
    // Same trace from shape algebra alone.
    std::vector<std::pair<std::string, Shape>> shape_trace(std::size_t batch) const;

    // Combined branch_hash() of every layer after the last train-mode forward.
    std::uint64_t branch_pattern() const;

    // Test fixture: negate the weight gradient of every conv layer.
    void corrupt_conv_backward(bool on);

private:
    ModelConfig config_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<std::pair<std::string, Shape>> shapes_;
};

// Train-mode forward, MSE + L2 loss and full backward. Gradients are left in
// the model's parameter slots.
template <typename T>
LossResult<T> model_gradients(ModelNet<T>& model, const Tensor<T>& batch, std::span<const T> targets,
                              const LossConfig& loss, Rng& rng);

extern template class ModelNet<float>;
extern template class ModelNet<double>;

} // namespace ctrlp
