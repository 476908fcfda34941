#include "ctrlp/model.hpp"

#include "ctrlp/error.hpp"
#include "ctrlp/text.hpp"

#include <cmath>
#include <random>

namespace ctrlp {

// --- config -----------------------------------------------------------------

void validate(const ModelConfig& config) {
    if (config.input_len == 0) throw UsageError("input_len must be positive");
    if (config.fc_dims.empty() || config.fc_dims.back() != 1)
        throw UsageError("the last fully-connected layer must have exactly 1 unit");
    for (std::size_t d : config.fc_dims)
        if (d == 0) throw UsageError("fully-connected widths must be positive");
    if (!(config.input_dropout >= 0 && config.input_dropout < 1) || !(config.fc_dropout >= 0 && config.fc_dropout < 1))
        throw UsageError("dropout rates must be in [0, 1)");
    if (config.init == InitScheme::fixed && !(config.init_std > 0)) throw UsageError("init std must be positive");
    if (!(config.bn_eps > 0)) throw UsageError("bn_eps must be positive");
    if (!(config.bn_momentum > 0 && config.bn_momentum < 1)) throw UsageError("bn_momentum must be in (0, 1)");
    if (config.pool_window == 0 || config.pool_stride == 0) throw UsageError("pool window and stride must be positive");

    std::size_t len = config.input_len;
    for (std::size_t i = 0; i < config.convs.size(); ++i) {
        const ConvSpec& c = config.convs[i];
        if (c.out_channels == 0 || c.kernel_len == 0 || c.stride == 0)
            throw UsageError("conv" + std::to_string(i + 1) + ": channels, kernel and stride must be positive");
        if (c.kernel_len > len)
            throw UsageError("conv" + std::to_string(i + 1) + ": kernel length " + std::to_string(c.kernel_len) +
                             " exceeds incoming length " + std::to_string(len));
        len = conv_output_length(len, c.kernel_len, c.stride);
        if (len < config.pool_window)
            throw UsageError("pool" + std::to_string(i + 1) + ": incoming length " + std::to_string(len) +
                             " is shorter than the pool window");
        len = conv_output_length(len, config.pool_window, config.pool_stride);
    }
}

std::string format_init(const ModelConfig& config) {
    return config.init == InitScheme::he ? "he" : "fixed:" + text::format_double(config.init_std);
}

std::vector<std::pair<std::string, std::string>> to_entries(const ModelConfig& config) {
    std::string convs;
    for (const auto& c : config.convs) {
        if (!convs.empty()) convs += ",";
        convs += std::to_string(c.out_channels) + "x" + std::to_string(c.kernel_len) + "x" + std::to_string(c.stride);
    }
    std::string fc;
    for (std::size_t d : config.fc_dims) {
        if (!fc.empty()) fc += ",";
        fc += std::to_string(d);
    }
    return {
        {"input_len", std::to_string(config.input_len)},
        {"conv", convs.empty() ? "none" : convs},
        {"pool", std::to_string(config.pool_window) + "x" + std::to_string(config.pool_stride)},
        {"fc", fc},
        {"input_dropout", text::format_double(config.input_dropout)},
        {"fc_dropout", text::format_double(config.fc_dropout)},
        {"init", format_init(config)},
        {"bn_momentum", text::format_double(config.bn_momentum)},
        {"bn_eps", text::format_double(config.bn_eps)},
        {"output_relu", config.output_relu ? "on" : "off"},
    };
}

bool apply_model_entry(ModelConfig& config, const std::string& key, const std::string& value) {
    if (key == "input_len") {
        config.input_len = text::parse_uint(value, key);
    } else if (key == "conv") {
        config.convs.clear();
        if (text::trim(value) == "none") return true;
        for (const auto& spec : text::split(value, ',')) {
            auto parts = text::split(spec, 'x');
            if (parts.size() != 2 && parts.size() != 3)
                throw UsageError("conv: expected CHANNELSxKERNEL[xSTRIDE], got '" + spec + "'");
            ConvSpec c{text::parse_uint(parts[0], key), text::parse_uint(parts[1], key), 1};
            if (parts.size() == 3) c.stride = text::parse_uint(parts[2], key);
            config.convs.push_back(c);
        }
    } else if (key == "pool") {
        auto parts = text::split(value, 'x');
        if (parts.size() != 2) throw UsageError("pool: expected WINDOWxSTRIDE, got '" + value + "'");
        config.pool_window = text::parse_uint(parts[0], key);
        config.pool_stride = text::parse_uint(parts[1], key);
    } else if (key == "fc") {
        config.fc_dims.clear();
        for (const auto& d : text::split(value, ',')) config.fc_dims.push_back(text::parse_uint(d, key));
    } else if (key == "input_dropout") {
        config.input_dropout = text::parse_double(value, key);
    } else if (key == "fc_dropout") {
        config.fc_dropout = text::parse_double(value, key);
    } else if (key == "init") {
        const auto v = text::trim(value);
        if (v == "he") {
            config.init = InitScheme::he;
        } else if (v.starts_with("fixed:")) {
            config.init = InitScheme::fixed;
            config.init_std = text::parse_double(v.substr(6), key);
        } else {
            throw UsageError("init: expected he or fixed:STD, got '" + value + "'");
        }
    } else if (key == "bn_momentum") {
        config.bn_momentum = text::parse_double(value, key);
    } else if (key == "bn_eps") {
        config.bn_eps = text::parse_double(value, key);
    } else if (key == "output_relu") {
        config.output_relu = text::parse_on_off(value, key);
    } else {
        return false;
    }
    return true;
}

// --- layers -----------------------------------------------------------------

namespace {

template <typename T>
void init_gaussian(Tensor<T>& weights, std::size_t fan_in, const ModelConfig& config, Rng& rng) {
    const double sd = config.init == InitScheme::he ? std::sqrt(2.0 / static_cast<double>(fan_in)) : config.init_std;
    std::normal_distribution<double> normal(0.0, sd);
    for (auto& w : weights.values()) w = static_cast<T>(normal(rng));
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 14695981039346656037ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) h = (h ^ p[i]) * 1099511628211ULL;
    return h;
}

template <typename T>
class ConvLayer final : public Layer<T> {
public:
    ConvLayer(std::string name, std::size_t in_ch, const ConvSpec& spec)
        : Layer<T>(std::move(name)),
          params_{Tensor<T>({spec.out_channels, in_ch, spec.kernel_len}), Tensor<T>({spec.out_channels}), spec.stride},
          grads_{Tensor<T>(params_.weights.shape()), Tensor<T>(params_.bias.shape())} {}

    Shape output_shape(const Shape& in) const override {
        return {in[0], params_.weights.dim(0), conv_output_length(in[2], params_.weights.dim(2), params_.stride)};
    }
    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        auto r = conv1d_forward(input, params_, mode);
        cache_ = std::move(r.cache);
        return std::move(r.output);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        auto r = conv1d_backward(params_, cache_, grad_out);
        grads_ = std::move(r.grads);
        if (corrupt_)
            for (auto& g : grads_.weights.values()) g = -g;
        return std::move(r.grad_input);
    }
    std::vector<ParamSlot<T>> parameters() override {
        return {{this->name() + ".weight", &params_.weights, &grads_.weights, true},
                {this->name() + ".bias", &params_.bias, &grads_.bias, false}};
    }
    std::vector<std::pair<std::string, Tensor<T>*>> state() override {
        return {{this->name() + ".weight", &params_.weights}, {this->name() + ".bias", &params_.bias}};
    }
    ConvParams<T>& params() { return params_; }
    void set_corrupt(bool on) { corrupt_ = on; }

private:
    ConvParams<T> params_;
    ConvGrads<T> grads_;
    ConvCache<T> cache_;
    bool corrupt_ = false;
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
public:
    BatchNormLayer(std::string name, std::size_t channels, double momentum, double eps)
        : Layer<T>(std::move(name)), params_(BatchNormParams<T>::identity(channels, momentum, eps)),
          grads_{Tensor<T>({channels}), Tensor<T>({channels})} {}

    Shape output_shape(const Shape& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        auto r = batchnorm_forward(input, params_, mode);
        cache_ = std::move(r.cache);
        return std::move(r.output);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        auto r = batchnorm_backward(params_, cache_, grad_out);
        grads_ = std::move(r.grads);
        return std::move(r.grad_input);
    }
    std::vector<ParamSlot<T>> parameters() override {
        return {{this->name() + ".gamma", &params_.gamma, &grads_.gamma, false},
                {this->name() + ".beta", &params_.beta, &grads_.beta, false}};
    }
    std::vector<std::pair<std::string, Tensor<T>*>> state() override {
        return {{this->name() + ".gamma", &params_.gamma},
                {this->name() + ".beta", &params_.beta},
                {this->name() + ".running_mean", &params_.running_mean},
                {this->name() + ".running_var", &params_.running_var}};
    }

private:
    BatchNormParams<T> params_;
    BatchNormGrads<T> grads_;
    BatchNormCache<T> cache_;
};

template <typename T>
class DenseLayer final : public Layer<T> {
public:
    DenseLayer(std::string name, std::size_t in_dim, std::size_t out_dim)
        : Layer<T>(std::move(name)), params_{Tensor<T>({out_dim, in_dim}), Tensor<T>({out_dim})},
          grads_{Tensor<T>({out_dim, in_dim}), Tensor<T>({out_dim})} {}

    Shape output_shape(const Shape& in) const override { return {in[0], params_.weights.dim(0)}; }
    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        auto r = dense_forward(input, params_, mode);
        cache_ = std::move(r.cache);
        return std::move(r.output);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        auto r = dense_backward(params_, cache_, grad_out);
        grads_ = std::move(r.grads);
        return std::move(r.grad_input);
    }
    std::vector<ParamSlot<T>> parameters() override {
        return {{this->name() + ".weight", &params_.weights, &grads_.weights, true},
                {this->name() + ".bias", &params_.bias, &grads_.bias, false}};
    }
    std::vector<std::pair<std::string, Tensor<T>*>> state() override {
        return {{this->name() + ".weight", &params_.weights}, {this->name() + ".bias", &params_.bias}};
    }
    DenseParams<T>& params() { return params_; }

private:
    DenseParams<T> params_;
    DenseGrads<T> grads_;
    DenseCache<T> cache_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
public:
    using Layer<T>::Layer;
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        auto r = relu_forward(input, mode);
        cache_ = std::move(r.cache);
        return std::move(r.output);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override { return relu_backward(cache_, grad_out).grad_input; }
    std::uint64_t branch_hash() const override { return fnv1a(cache_.active.data(), cache_.active.size()); }

private:
    MaskCache cache_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
public:
    MaxPoolLayer(std::string name, std::size_t window, std::size_t stride)
        : Layer<T>(std::move(name)), window_(window), stride_(stride) {}
    Shape output_shape(const Shape& in) const override {
        return {in[0], in[1], conv_output_length(in[2], window_, stride_)};
    }
    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
        auto r = maxpool_forward(input, window_, stride_, mode);
        cache_ = std::move(r.cache);
        return std::move(r.output);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override { return maxpool_backward(cache_, grad_out).grad_input; }
    std::uint64_t branch_hash() const override {
        return fnv1a(cache_.argmax.data(), cache_.argmax.size() * sizeof(std::size_t));
    }

private:
    std::size_t window_, stride_;
    PoolCache cache_;
};

template <typename T>
class DropoutLayer final : public Layer<T> {
public:
    DropoutLayer(std::string name, double rate) : Layer<T>(std::move(name)), rate_(rate) {}
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) override {
        auto r = dropout_forward(input, rate_, mode, rng);
        cache_ = std::move(r.cache);
        return std::move(r.output);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override { return dropout_backward(cache_, grad_out).grad_input; }

private:
    double rate_;
    DropoutCache<T> cache_;
};

// Pure reshape between [B, C, L] and [B, C * L] (or [B, L] and [B, 1, L]).
template <typename T>
class ReshapeLayer final : public Layer<T> {
public:
    ReshapeLayer(std::string name, bool to_channels) : Layer<T>(std::move(name)), to_channels_(to_channels) {}
    Shape output_shape(const Shape& in) const override {
        return to_channels_ ? Shape{in[0], 1, in[1]} : Shape{in[0], in[1] * in[2]};
    }
    Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
        input_shape_ = input.shape();
        Tensor<T> out = input;
        out.reshape(output_shape(input.shape()));
        return out;
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        g.reshape(input_shape_);
        return g;
    }

private:
    bool to_channels_;
    Shape input_shape_;
};

} // namespace

// --- network ----------------------------------------------------------------

template <typename T>
ModelNet<T>::ModelNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    validate(config_);
    Rng rng(seed);
    layers_.push_back(std::make_unique<DropoutLayer<T>>("input_dropout", config_.input_dropout));
    layers_.push_back(std::make_unique<ReshapeLayer<T>>("to_channels", true));

    std::size_t channels = 1, len = config_.input_len;
    for (std::size_t i = 0; i < config_.convs.size(); ++i) {
        const auto& spec = config_.convs[i];
        const std::string n = std::to_string(i + 1);
        auto conv = std::make_unique<ConvLayer<T>>("conv" + n, channels, spec);
        init_gaussian(conv->params().weights, channels * spec.kernel_len, config_, rng);
        layers_.push_back(std::move(conv));
        layers_.push_back(std::make_unique<BatchNormLayer<T>>("bn" + n, spec.out_channels, config_.bn_momentum,
                                                              config_.bn_eps));
        layers_.push_back(std::make_unique<ReluLayer<T>>("relu" + n));
        layers_.push_back(std::make_unique<MaxPoolLayer<T>>("pool" + n, config_.pool_window, config_.pool_stride));
        channels = spec.out_channels;
        len = conv_output_length(conv_output_length(len, spec.kernel_len, spec.stride), config_.pool_window,
                                 config_.pool_stride);
    }
    layers_.push_back(std::make_unique<ReshapeLayer<T>>("flatten", false));

    std::size_t width = channels * len;
    for (std::size_t i = 0; i < config_.fc_dims.size(); ++i) {
        const std::string n = std::to_string(i + 1);
        auto fc = std::make_unique<DenseLayer<T>>("fc" + n, width, config_.fc_dims[i]);
        init_gaussian(fc->params().weights, width, config_, rng);
        layers_.push_back(std::move(fc));
        width = config_.fc_dims[i];
        const bool hidden = i + 1 < config_.fc_dims.size();
        if (hidden) {
            layers_.push_back(std::make_unique<ReluLayer<T>>("fc" + n + "_relu"));
            layers_.push_back(std::make_unique<DropoutLayer<T>>("fc" + n + "_dropout", config_.fc_dropout));
        } else if (config_.output_relu) {
            layers_.push_back(std::make_unique<ReluLayer<T>>("output_relu"));
        }
    }
}

template <typename T>
Tensor<T> ModelNet<T>::forward(const Tensor<T>& batch, Mode mode, Rng& rng) {
    if (batch.rank() != 2 || batch.dim(1) != config_.input_len)
        throw UsageError("model expects input [B, " + std::to_string(config_.input_len) + "], got " +
                         shape_string(batch.shape()));
    if (!batch.all_finite()) throw NumericError("model input contains non-finite values");
    shapes_.clear();
    Tensor<T> x = batch;
    for (auto& layer : layers_) {
        x = layer->forward(x, mode, rng);
        if (!x.all_finite()) throw NumericError("non-finite activations after " + layer->name());
        shapes_.emplace_back(layer->name(), x.shape());
    }
    x.reshape({batch.dim(0)});
    return x;
}

template <typename T>
Tensor<T> ModelNet<T>::predict(const Tensor<T>& batch) {
    Rng unused(0);
    return forward(batch, Mode::infer, unused);
}

template <typename T>
void ModelNet<T>::backward(std::span<const T> grad_predictions) {
    Tensor<T> g({grad_predictions.size(), 1}, std::vector<T>(grad_predictions.begin(), grad_predictions.end()));
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

template <typename T>
std::vector<ParamSlot<T>> ModelNet<T>::parameters() {
    std::vector<ParamSlot<T>> out;
    for (auto& layer : layers_)
        for (auto& slot : layer->parameters()) out.push_back(std::move(slot));
    return out;
}

template <typename T>
std::vector<const Tensor<T>*> ModelNet<T>::regularized_weights() {
    std::vector<const Tensor<T>*> out;
    for (auto& slot : parameters())
        if (slot.regularized) out.push_back(slot.value);
    return out;
}

template <typename T>
std::size_t ModelNet<T>::count_parameters() const {
    std::size_t total = 0;
    for (auto& layer : layers_)
        for (auto& slot : layer->parameters()) total += slot.value->size();
    return total;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelNet<T>::state() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& layer : layers_)
        for (auto& entry : layer->state()) out.push_back(std::move(entry));
    return out;
}

template <typename T>
Layer<T>& ModelNet<T>::layer(const std::string& name) {
    for (auto& layer : layers_)
        if (layer->name() == name) return *layer;
    throw UsageError("no layer named " + name);
}

template <typename T>
std::vector<std::pair<std::string, Shape>> ModelNet<T>::shape_trace(std::size_t batch) const {
    std::vector<std::pair<std::string, Shape>> out;
    Shape shape{batch, config_.input_len};
    for (const auto& layer : layers_) {
        shape = layer->output_shape(shape);
        out.emplace_back(layer->name(), shape);
    }
    return out;
}

template <typename T>
std::uint64_t ModelNet<T>::branch_pattern() const {
    std::uint64_t h = 0;
    for (const auto& layer : layers_) {
        const std::uint64_t lh = layer->branch_hash();
        h = fnv1a(&lh, sizeof(lh), h ^ 0x9e3779b97f4a7c15ULL);
    }
    return h;
}

template <typename T>
void ModelNet<T>::corrupt_conv_backward(bool on) {
    for (auto& layer : layers_)
        if (auto* conv = dynamic_cast<ConvLayer<T>*>(layer.get())) conv->set_corrupt(on);
}

template <typename T>
LossResult<T> model_gradients(ModelNet<T>& model, const Tensor<T>& batch, std::span<const T> targets,
                              const LossConfig& loss, Rng& rng) {
    Tensor<T> predictions = model.forward(batch, Mode::train, rng);
    auto weights = model.regularized_weights();
    LossResult<T> result = mse_l2_loss<T>(predictions.values(), targets, weights, loss);
    model.backward(result.grad_predictions);
    auto params = model.parameters();
    add_l2_gradient<T>(params, loss);
    return result;
}

template class ModelNet<float>;
template class ModelNet<double>;
template LossResult<float> model_gradients(ModelNet<float>&, const Tensor<float>&, std::span<const float>,
                                           const LossConfig&, Rng&);
template LossResult<double> model_gradients(ModelNet<double>&, const Tensor<double>&, std::span<const double>,
                                            const LossConfig&, Rng&);

} // namespace ctrlp
