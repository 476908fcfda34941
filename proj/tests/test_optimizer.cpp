#include "ctrlp/error.hpp"
#include "ctrlp/gradient_check.hpp"
#include "ctrlp/model.hpp"
#include "ctrlp/optimizer.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace ctrlp;

namespace {

// Owns a set of parameter/gradient tensors and exposes them as slots.
struct Params {
    std::vector<Tensor<double>> values;
    std::vector<Tensor<double>> grads;

    std::vector<ParamSlot<double>> slots() {
        std::vector<ParamSlot<double>> out;
        for (std::size_t i = 0; i < values.size(); ++i)
            out.push_back({"p" + std::to_string(i), &values[i], &grads[i], true});
        return out;
    }
};

void step(Params& p, OptimizerState<double>& state) {
    const auto s = p.slots();
    adam_step<double>(s, state);
}

} // namespace

TEST_CASE("mse_l2_loss examples") {
    const std::vector<double> preds{1, 2}, zeros{0, 0};
    const auto r = mse_l2_loss<double>(preds, zeros, {}, LossConfig{0});
    CHECK(r.loss == 2.5);
    CHECK(r.grad_predictions == std::vector<double>{1, 2});

    const auto perfect = mse_l2_loss<double>(preds, preds, {}, LossConfig{0});
    CHECK(perfect.loss == 0);
    CHECK(perfect.grad_predictions == std::vector<double>{0, 0});

    const Tensor<double> w({1}, {2});
    const std::vector<const Tensor<double>*> regularized{&w};
    const auto l2 = mse_l2_loss<double>(preds, preds, regularized, LossConfig{0.5});
    CHECK(l2.loss == 2.0);
    CHECK(l2.l2 == 2.0);
    CHECK(l2.mse == 0.0);

    CHECK_THROWS_AS(mse_l2_loss<double>(preds, std::vector<double>{1}, {}, LossConfig{}), UsageError);
    CHECK_THROWS_AS(mse_l2_loss<double>({}, {}, {}, LossConfig{}), UsageError);
}

TEST_CASE("mse gradient matches finite differences") {
    std::vector<double> preds{0.3, -1.7, 4.2, 0.0}, targets{1.0, -1.0, 2.5, 0.5};
    const auto r = mse_l2_loss<double>(preds, targets, {}, LossConfig{0});
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto up = preds, down = preds;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        const double numeric = (mse_l2_loss<double>(up, targets, {}, LossConfig{0}).loss -
                                mse_l2_loss<double>(down, targets, {}, LossConfig{0}).loss) /
                               2e-6;
        CHECK(relative_error(r.grad_predictions[i], numeric) < 1e-6);
    }
}

TEST_CASE("staircase learning rate") {
    const AdamConfig c;
    CHECK(lr_at_step(c, 0) == 1e-4);
    CHECK(lr_at_step(c, 19'999) == 1e-4);
    CHECK(lr_at_step(c, 20'000) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at_step(c, 39'999) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at_step(c, 40'000) == doctest::Approx(2.5e-5).epsilon(1e-12));
}

TEST_CASE("Adam first step is -lr * g / (|g| + eps)") {
    for (double g : {1.0, -3.0, 1e-3, 250.0}) {
        Params p{{Tensor<double>({1}, {0.0})}, {Tensor<double>({1}, {g})}};
        OptimizerState<double> state;
        step(p, state);
        const double expect = -1e-4 * g / (std::abs(g) + 1e-8);
        CHECK(std::abs(p.values[0][0] - expect) <= 1e-9 * std::abs(expect));
        CHECK(state.step == 1);
    }
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    Params p{{Tensor<double>({3}, {1, -2, 0.5})}, {Tensor<double>({3})}};
    const auto before = p.values[0];
    OptimizerState<double> state;
    for (int i = 0; i < 5; ++i) step(p, state);
    CHECK(p.values[0] == before);
}

TEST_CASE("constant gradient displacement tends to lr * sign(g)") {
    Params p{{Tensor<double>({2}, {0, 0})}, {Tensor<double>({2}, {0.7, -0.02})}};
    OptimizerState<double> state;
    state.config.decay_step = 1'000'000;
    double last[2] = {0, 0}, delta[2] = {0, 0};
    for (int t = 0; t < 5000; ++t) {
        step(p, state);
        for (int i = 0; i < 2; ++i) {
            delta[i] = p.values[0][i] - last[i];
            last[i] = p.values[0][i];
        }
    }
    CHECK(delta[0] == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK(delta[1] == doctest::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("the decayed rate applies from update 20000 on") {
    Params p{{Tensor<double>({1}, {0.0})}, {Tensor<double>({1}, {1.0})}};
    OptimizerState<double> state;
    state.config.decay_step = 3;
    double last = 0;
    std::vector<double> deltas;
    for (int t = 0; t < 4; ++t) {
        step(p, state);
        deltas.push_back(p.values[0][0] - last);
        last = p.values[0][0];
    }
    // constant gradient: bias-corrected m_hat / sqrt(v_hat) is 1 at every step
    CHECK(deltas[2] == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK(deltas[3] == doctest::Approx(-5e-5).epsilon(1e-6));
}

TEST_CASE("updates are elementwise and order-independent") {
    Params a{{Tensor<double>({2}, {1, 2}), Tensor<double>({3}, {3, 4, 5})},
             {Tensor<double>({2}, {0.1, -0.5}), Tensor<double>({3}, {2, 0, -1})}};
    Params b{{a.values[1], a.values[0]}, {a.grads[1], a.grads[0]}};
    OptimizerState<double> sa, sb;
    for (int t = 0; t < 3; ++t) {
        step(a, sa);
        step(b, sb);
    }
    CHECK(a.values[0] == b.values[1]);
    CHECK(a.values[1] == b.values[0]);

    Params flat{{Tensor<double>({5}, {1, 2, 3, 4, 5})}, {Tensor<double>({5}, {0.1, -0.5, 2, 0, -1})}};
    Params perm{{Tensor<double>({5}, {5, 3, 1, 4, 2})}, {Tensor<double>({5}, {-1, 2, 0.1, 0, -0.5})}};
    OptimizerState<double> sf, sp;
    step(flat, sf);
    step(perm, sp);
    const std::size_t order[5] = {4, 2, 0, 3, 1};
    for (std::size_t i = 0; i < 5; ++i) CHECK(perm.values[0][i] == flat.values[0][order[i]]);
}

TEST_CASE("non-finite gradients abort the step untouched") {
    Params p{{Tensor<double>({2}, {1, 2})}, {Tensor<double>({2}, {0.5, 0.5})}};
    OptimizerState<double> state;
    step(p, state);
    const auto values = p.values[0];
    const auto m = state.m;
    p.grads[0][1] = std::nan("");
    CHECK_THROWS_AS(step(p, state), NumericError);
    CHECK(p.values[0] == values);
    CHECK(state.m == m);
    CHECK(state.step == 1);
}

TEST_CASE("L2 reaches weights only") {
    auto grads_at = [](double lambda) {
        ModelNet<double> m(reduced_config(), 6);
        Rng data(3);
        std::normal_distribution<double> dist;
        Tensor<double> x({4, 32});
        for (auto& v : x.values()) v = dist(data);
        const std::vector<double> targets{1, -2, 0.5, 3};
        Rng rng(9);
        model_gradients(m, x, std::span<const double>(targets), LossConfig{lambda}, rng);
        std::vector<std::tuple<std::string, Tensor<double>, Tensor<double>, bool>> out;
        for (auto& p : m.parameters()) out.emplace_back(p.name, *p.value, *p.grad, p.regularized);
        return out;
    };
    const auto plain = grads_at(0.0), penalized = grads_at(0.1);
    REQUIRE(plain.size() == penalized.size());
    for (std::size_t i = 0; i < plain.size(); ++i) {
        const auto& [name, value, g0, regularized] = plain[i];
        const auto& g1 = std::get<2>(penalized[i]);
        INFO(name);
        CHECK(regularized == name.ends_with(".weight"));
        for (std::size_t j = 0; j < g0.size(); ++j) {
            const double expect = g0[j] + (regularized ? 2 * 0.1 * value[j] : 0.0);
            CHECK(g1[j] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("Adam never touches BN running statistics") {
    ModelNet<float> m(reduced_config(), 2);
    Rng rng(1);
    Tensor<float> x({4, 32}, 0.5f);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(static_cast<float>(i));
    const std::vector<float> targets{1, 2, 3, 4};
    model_gradients(m, x, std::span<const float>(targets), LossConfig{}, rng);
    std::vector<Tensor<float>> running;
    for (auto& [name, t] : m.state())
        if (name.find("running") != std::string::npos) running.push_back(*t);
    OptimizerState<float> state;
    const auto slots = m.parameters();
    adam_step<float>(slots, state);
    std::size_t i = 0;
    for (auto& [name, t] : m.state())
        if (name.find("running") != std::string::npos) CHECK(*t == running[i++]);
    for (const auto& s : slots) CHECK(s.name.find("running") == std::string::npos);
}
