#include "ctrlp/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string_view>
#include <random>

namespace ctrlp {

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
    return std::abs(analytic - numeric) / scale;
}

ModelConfig reduced_config() {
    ModelConfig c;
    c.input_len = 32;
    c.convs = {{2, 5, 1}, {3, 3, 1}, {4, 3, 1}};
    c.fc_dims = {6, 5, 1};
    return c;
}

namespace {

// Scalar objective plus the branch pattern (ReLU masks, pool argmax) it went
// through; a pattern change between the two probes means the step crossed a
// kink and the difference quotient is not a derivative estimate.
struct Probe {
    std::function<double()> loss;
    std::function<std::uint64_t()> pattern = [] { return std::uint64_t{0}; };
};

// Perturbs `value` in place and returns the central difference, or nothing
// when the probes straddle a kink.
std::optional<double> central_difference(double& value, double relative_step, const Probe& probe) {
    const double saved = value;
    const double h = relative_step * std::max(1.0, std::abs(saved));
    value = saved + h;
    const double up = probe.loss();
    const std::uint64_t up_pattern = probe.pattern();
    value = saved - h;
    const double down = probe.loss();
    const std::uint64_t down_pattern = probe.pattern();
    value = saved;
    if (up_pattern != down_pattern) return std::nullopt;
    return (up - down) / (2.0 * h);
}

GradientCheckRow check_tensor(const std::string& name, Tensor<double>& values, const Tensor<double>& analytic,
                              double relative_step, const Probe& probe) {
    GradientCheckRow row{name, 0.0, 0, 0};
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto numeric = central_difference(values[i], relative_step, probe);
        if (!numeric) {
            ++row.skipped;
            continue;
        }
        ++row.checked;
        row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic[i], *numeric));
    }
    return row;
}

Tensor<double> random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
    Tensor<double> t(std::move(shape));
    std::normal_distribution<double> normal(0.0, sd);
    for (auto& v : t.values()) v = normal(rng);
    return t;
}

double contract(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

GradientCheckRow merge(std::string name, std::initializer_list<GradientCheckRow> rows) {
    GradientCheckRow out{std::move(name), 0.0, 0, 0};
    for (const auto& r : rows) {
        out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
        out.checked += r.checked;
        out.skipped += r.skipped;
    }
    return out;
}

// Each kernel check uses L = <upstream, f(x, params)> with a random upstream.
std::vector<GradientCheckRow> kernel_checks(Rng& rng, double h, bool corrupt_conv) {
    std::vector<GradientCheckRow> rows;
    {
        Tensor<double> x = random_tensor({2, 3, 11}, rng);
        ConvParams<double> p{random_tensor({4, 3, 4}, rng), random_tensor({4}, rng), 2};
        Tensor<double> up = random_tensor({2, 4, 4}, rng);
        Probe f{[&] { return contract(up, conv1d_forward(x, p, Mode::infer).output); }};
        auto fwd = conv1d_forward(x, p, Mode::train);
        auto bwd = conv1d_backward(p, fwd.cache, up);
        if (corrupt_conv)
            for (auto& g : bwd.grads.weights.values()) g = -g;
        rows.push_back(merge("kernel:conv1d", {check_tensor("x", x, bwd.grad_input, h, f),
                                               check_tensor("w", p.weights, bwd.grads.weights, h, f),
                                               check_tensor("b", p.bias, bwd.grads.bias, h, f)}));
    }
    {
        Tensor<double> x = random_tensor({3, 2, 5}, rng);
        auto p = BatchNormParams<double>::identity(2);
        p.gamma = random_tensor({2}, rng);
        p.beta = random_tensor({2}, rng);
        Tensor<double> up = random_tensor({3, 2, 5}, rng);
        Probe f{[&] {
            auto copy = p;
            return contract(up, batchnorm_forward(x, copy, Mode::train).output);
        }};
        auto copy = p;
        auto fwd = batchnorm_forward(x, copy, Mode::train);
        auto bwd = batchnorm_backward(p, fwd.cache, up);
        rows.push_back(merge("kernel:batchnorm", {check_tensor("x", x, bwd.grad_input, h, f),
                                                  check_tensor("gamma", p.gamma, bwd.grads.gamma, h, f),
                                                  check_tensor("beta", p.beta, bwd.grads.beta, h, f)}));
    }
    {
        Tensor<double> x = random_tensor({2, 3, 9}, rng);
        Tensor<double> up = random_tensor({2, 3, 4}, rng);
        PoolCache probed;
        Probe f{[&] {
                    auto r = maxpool_forward(x, 2, 2, Mode::train);
                    probed = std::move(r.cache);
                    return contract(up, r.output);
                },
                [&] { return static_cast<std::uint64_t>(std::hash<std::string_view>{}(std::string_view(
                          reinterpret_cast<const char*>(probed.argmax.data()),
                          probed.argmax.size() * sizeof(std::size_t)))); }};
        auto fwd = maxpool_forward(x, 2, 2, Mode::train);
        rows.push_back(merge("kernel:maxpool", {check_tensor("x", x, maxpool_backward(fwd.cache, up).grad_input, h, f)}));
    }
    {
        Tensor<double> x = random_tensor({3, 4}, rng);
        DenseParams<double> p{random_tensor({5, 4}, rng), random_tensor({5}, rng)};
        Tensor<double> up = random_tensor({3, 5}, rng);
        Probe f{[&] { return contract(up, dense_forward(x, p, Mode::infer).output); }};
        auto fwd = dense_forward(x, p, Mode::train);
        auto bwd = dense_backward(p, fwd.cache, up);
        rows.push_back(merge("kernel:dense", {check_tensor("x", x, bwd.grad_input, h, f),
                                              check_tensor("w", p.weights, bwd.grads.weights, h, f),
                                              check_tensor("b", p.bias, bwd.grads.bias, h, f)}));
    }
    {
        Tensor<double> x = random_tensor({4, 6}, rng);
        for (auto& v : x.values())
            if (std::abs(v) < 1e-2) v += 0.1; // keep clear of the kink
        Tensor<double> up = random_tensor({4, 6}, rng);
        Probe f{[&] { return contract(up, relu_forward(x, Mode::infer).output); }};
        auto fwd = relu_forward(x, Mode::train);
        rows.push_back(merge("kernel:relu", {check_tensor("x", x, relu_backward(fwd.cache, up).grad_input, h, f)}));
    }
    {
        Tensor<double> x = random_tensor({4, 6}, rng);
        Tensor<double> up = random_tensor({4, 6}, rng);
        const std::uint64_t mask_seed = rng();
        Probe f{[&] {
            Rng r(mask_seed);
            return contract(up, dropout_forward(x, 0.5, Mode::train, r).output);
        }};
        Rng r(mask_seed);
        auto fwd = dropout_forward(x, 0.5, Mode::train, r);
        rows.push_back(
            merge("kernel:dropout", {check_tensor("x", x, dropout_backward(fwd.cache, up).grad_input, h, f)}));
    }
    return rows;
}

double model_loss(ModelNet<double>& model, const Tensor<double>& batch, const std::vector<double>& targets,
                  const LossConfig& loss, std::uint64_t mask_seed) {
    Rng rng(mask_seed);
    Tensor<double> pred = model.forward(batch, Mode::train, rng);
    auto weights = model.regularized_weights();
    return mse_l2_loss<double>(pred.values(), targets, weights, loss).loss;
}

} // namespace

GradientCheckReport gradient_check(const GradientCheckOptions& options) {
    Rng rng(options.seed);
    GradientCheckReport report;
    if (options.include_kernels) report.layers = kernel_checks(rng, options.relative_step, options.inject_conv_fault);

    ModelNet<double> model(options.config, options.seed);
    model.corrupt_conv_backward(options.inject_conv_fault);
    // Zero biases put units whose inputs are all dropped exactly on the ReLU
    // kink, where finite differences are meaningless.
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (auto& slot : model.parameters())
        if (slot.name.ends_with(".bias") || slot.name.ends_with(".beta"))
            for (auto& v : slot.value->values()) v = jitter(rng);
    Tensor<double> batch = random_tensor({options.batch, options.config.input_len}, rng);
    std::vector<double> targets(options.batch);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& t : targets) t = normal(rng);
    const LossConfig loss{options.l2_lambda};
    const std::uint64_t mask_seed = rng();

    Rng mask(mask_seed);
    model_gradients<double>(model, batch, targets, loss, mask);
    auto params = model.parameters();
    std::vector<Tensor<double>> analytic;
    for (auto& slot : params) analytic.push_back(*slot.grad);

    Probe f{[&] { return model_loss(model, batch, targets, loss, mask_seed); },
            [&] { return model.branch_pattern(); }};
    for (std::size_t i = 0; i < params.size();) {
        // group consecutive slots of the same layer ("conv1.weight", "conv1.bias")
        const std::string layer = params[i].name.substr(0, params[i].name.find('.'));
        GradientCheckRow row{layer, 0.0, 0, 0};
        for (; i < params.size() && params[i].name.starts_with(layer + "."); ++i) {
            auto r = check_tensor(params[i].name, *params[i].value, analytic[i], options.relative_step, f);
            row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
            row.checked += r.checked;
            row.skipped += r.skipped;
        }
        report.layers.push_back(row);
    }
    for (const auto& row : report.layers) report.whole_model = std::max(report.whole_model, row.max_rel_error);
    return report;
}

SpotCheckResult spot_check(ModelNet<double>& model, const Tensor<double>& batch, const std::vector<double>& targets,
                  const LossConfig& loss, std::size_t count, std::uint64_t seed, double relative_step) {
    Rng rng(seed);
    const std::uint64_t mask_seed = rng();
    Rng mask(mask_seed);
    model_gradients<double>(model, batch, targets, loss, mask);
    auto params = model.parameters();

    std::vector<std::pair<std::size_t, std::size_t>> all; // (slot, entry)
    std::size_t total = 0;
    for (const auto& slot : params) total += slot.value->size();
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t n = 0; n < count; ++n) {
        std::size_t flat = pick(rng);
        std::size_t s = 0;
        while (flat >= params[s].value->size()) flat -= params[s++].value->size();
        all.emplace_back(s, flat);
    }

    Probe f{[&] { return model_loss(model, batch, targets, loss, mask_seed); },
            [&] { return model.branch_pattern(); }};
    SpotCheckResult result;
    for (auto [s, i] : all) {
        const double analytic = (*params[s].grad)[i];
        const auto numeric = central_difference((*params[s].value)[i], relative_step, f);
        if (!numeric) {
            ++result.skipped;
            continue;
        }
        ++result.checked;
        result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, *numeric));
    }
    return result;
}

} // namespace ctrlp
