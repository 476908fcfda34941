#include "ctrlp/checkpoint.hpp"
#include "ctrlp/error.hpp"
#include "ctrlp/gradient_check.hpp"
#include "ctrlp/model.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

using namespace ctrlp;
using ctrlp::testing::temp_path;

namespace {

template <typename T>
Tensor<T> random_batch(std::size_t batch, std::size_t width, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor<T> t({batch, width});
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
    return t;
}

ModelConfig dense_only(std::size_t in) {
    ModelConfig c;
    c.input_len = in;
    c.convs.clear();
    c.fc_dims = {1};
    c.input_dropout = 0;
    return c;
}

std::map<std::string, std::size_t> sizes_by_name(ModelNet<float>& m) {
    std::map<std::string, std::size_t> out;
    for (const auto& p : m.parameters()) out[p.name] = p.value->size();
    return out;
}

} // namespace

TEST_CASE("default parameter count") {
    ModelNet<float> m(ModelConfig{}, 1);
    CHECK(m.count_parameters() == 5'512'129);
    const auto sizes = sizes_by_name(m);
    CHECK(sizes.at("conv1.weight") + sizes.at("conv1.bias") == 1'344);
    CHECK(sizes.at("bn1.gamma") + sizes.at("bn1.beta") == 64);
    CHECK(sizes.at("conv2.weight") + sizes.at("conv2.bias") == 43'072);
    CHECK(sizes.at("bn2.gamma") + sizes.at("bn2.beta") == 128);
    CHECK(sizes.at("conv3.weight") + sizes.at("conv3.bias") == 90'240);
    CHECK(sizes.at("bn3.gamma") + sizes.at("bn3.beta") == 256);
    CHECK(sizes.at("fc1.weight") + sizes.at("fc1.bias") == 4'326'400);
    CHECK(sizes.at("fc2.weight") + sizes.at("fc2.bias") == 1'049'600);
    CHECK(sizes.at("fc3.weight") + sizes.at("fc3.bias") == 1'025);
    CHECK(ModelNet<float>(dense_only(2), 1).count_parameters() == 3);
}

TEST_CASE("invalid configs are rejected") {
    ModelConfig c;
    c.convs = {{32, 400, 1}};
    CHECK_THROWS_AS(ModelNet<float>(c, 1), UsageError);
    ModelConfig wide;
    wide.fc_dims = {16, 2};
    CHECK_THROWS_AS(ModelNet<float>(wide, 1), UsageError);
    ModelConfig dropout;
    dropout.fc_dropout = 1.0;
    CHECK_THROWS_AS(ModelNet<float>(dropout, 1), UsageError);
}

TEST_CASE("shape trace follows VALID padding") {
    ModelNet<float> m(ModelConfig{}, 1);
    const std::vector<std::pair<std::string, Shape>> expected{
        {"input_dropout", {2, 384}}, {"to_channels", {2, 1, 384}}, {"conv1", {2, 32, 344}},
        {"bn1", {2, 32, 344}},       {"relu1", {2, 32, 344}},      {"pool1", {2, 32, 172}},
        {"conv2", {2, 64, 152}},     {"bn2", {2, 64, 152}},        {"relu2", {2, 64, 152}},
        {"pool2", {2, 64, 76}},      {"conv3", {2, 128, 66}},      {"bn3", {2, 128, 66}},
        {"relu3", {2, 128, 66}},     {"pool3", {2, 128, 33}},      {"flatten", {2, 4224}},
        {"fc1", {2, 1024}},          {"fc1_relu", {2, 1024}},      {"fc1_dropout", {2, 1024}},
        {"fc2", {2, 1024}},          {"fc2_relu", {2, 1024}},      {"fc2_dropout", {2, 1024}},
        {"fc3", {2, 1}}};
    CHECK(m.shape_trace(2) == expected);
    Rng rng(1);
    const auto out = m.forward(random_batch<float>(2, 384, 3), Mode::train, rng);
    CHECK(out.shape() == Shape{2});
    CHECK(m.activation_shapes() == expected);
}

TEST_CASE("initialization") {
    ModelNet<float> a(ModelConfig{}, 42), b(ModelConfig{}, 42), c(ModelConfig{}, 43);
    auto sa = a.state(), sb = b.state(), sc = c.state();
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        all_equal = all_equal && *sa[i].second == *sb[i].second;
        any_diff = any_diff || !(*sa[i].second == *sc[i].second);
    }
    CHECK(all_equal);
    CHECK(any_diff);

    for (auto& [name, t] : a.state()) {
        if (name.ends_with(".bias") || name.ends_with(".beta") || name.ends_with(".running_mean")) {
            CHECK(*t == Tensor<float>(t->shape(), 0.0f));
        } else if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
            CHECK(*t == Tensor<float>(t->shape(), 1.0f));
        }
    }

    // He scale: std of fc1 weights is sqrt(2 / 4224)
    const Tensor<float>* w = nullptr;
    for (auto& [name, t] : a.state())
        if (name == "fc1.weight") w = t;
    REQUIRE(w);
    double sq = 0;
    for (float v : w->values()) sq += static_cast<double>(v) * v;
    CHECK(std::sqrt(sq / w->size()) == doctest::Approx(std::sqrt(2.0 / 4224)).epsilon(0.01));

    ModelConfig fixed;
    fixed.init = InitScheme::fixed;
    fixed.init_std = 0.01;
    ModelNet<float> f(fixed, 1);
    for (auto& [name, t] : f.state())
        if (name == "fc1.weight") w = t;
    sq = 0;
    for (float v : w->values()) sq += static_cast<double>(v) * v;
    CHECK(std::sqrt(sq / w->size()) == doctest::Approx(0.01).epsilon(0.01));
}

TEST_CASE("forward contracts") {
    ModelNet<float> m(ModelConfig{}, 5);
    const auto x = random_batch<float>(3, 384, 9);
    const auto first = m.predict(x);
    CHECK(first == m.predict(x));
    CHECK(first.all_finite());

    Rng rng(1);
    CHECK_THROWS_AS(m.forward(random_batch<float>(3, 383, 9), Mode::infer, rng), UsageError);
    auto bad = x;
    bad[7] = std::nanf("");
    CHECK_THROWS_AS(m.forward(bad, Mode::infer, rng), NumericError);
}

TEST_CASE("zero network outputs its final bias") {
    ModelNet<float> m(ModelConfig{}, 5);
    for (auto& p : m.parameters()) p.value->fill(0.0f);
    const auto out = m.predict(random_batch<float>(4, 384, 2));
    for (float v : out.values()) CHECK(v == 0.0f);
}

TEST_CASE("zero output with zero targets leaves only the L2 term") {
    ModelNet<double> m(reduced_config(), 3);
    for (auto& p : m.parameters())
        if (p.name.starts_with("fc3")) p.value->fill(0.0);
    const std::vector<double> targets(4, 0.0);
    Rng rng(2);
    const LossConfig cfg{1e-3};
    const auto r = model_gradients(m, random_batch<double>(4, 32, 1), std::span<const double>(targets), cfg, rng);
    double l2 = 0;
    for (const auto* w : m.regularized_weights())
        for (double v : w->values()) l2 += v * v;
    CHECK(r.mse == 0.0);
    CHECK(r.loss == doctest::Approx(1e-3 * l2).epsilon(1e-12));
}

TEST_CASE("gradients are linear in the upstream gradient") {
    ModelNet<double> m(reduced_config(), 3);
    const auto x = random_batch<double>(4, 32, 8);
    const std::vector<double> g{0.3, -1.2, 0.8, 0.05};
    auto run = [&](double scale) {
        Rng rng(11);
        m.forward(x, Mode::train, rng);
        std::vector<double> scaled;
        for (double v : g) scaled.push_back(scale * v);
        m.backward(scaled);
        std::vector<Tensor<double>> grads;
        for (auto& p : m.parameters()) grads.push_back(*p.grad);
        return grads;
    };
    const auto once = run(1.0), twice = run(2.0);
    double worst = 0;
    for (std::size_t i = 0; i < once.size(); ++i)
        for (std::size_t j = 0; j < once[i].size(); ++j)
            worst = std::max(worst, relative_error(twice[i][j], 2.0 * once[i][j]));
    CHECK(worst < 1e-6);
}

TEST_CASE("train mode matches infer mode when dropout is off and BN uses its batch statistics") {
    ModelConfig c = reduced_config();
    c.input_dropout = 0;
    c.fc_dropout = 0;
    ModelNet<double> m(c, 4);
    const auto x = random_batch<double>(6, 32, 5);
    Rng rng(1);
    const auto train_out = m.forward(x, Mode::train, rng);
    // running = m * init + (1 - m) * batch, with init (0, 1): recover the batch statistics
    const double mom = c.bn_momentum;
    for (auto& [name, t] : m.state()) {
        if (name.ends_with(".running_mean"))
            for (auto& v : t->values()) v = v / (1 - mom);
        if (name.ends_with(".running_var"))
            for (auto& v : t->values()) v = (v - mom) / (1 - mom);
    }
    const auto infer_out = m.predict(x);
    for (std::size_t i = 0; i < x.dim(0); ++i) CHECK(relative_error(infer_out[i], train_out[i]) < 1e-5);
}

TEST_CASE("gradient check harness") {
    SUBCASE("reduced default topology") {
        GradientCheckOptions o;
        o.config = reduced_config();
        const auto report = gradient_check(o);
        for (const auto& row : report.layers) {
            INFO(row.name);
            CHECK(row.max_rel_error < 1e-4);
            CHECK(row.checked > 0);
        }
        CHECK(report.passed(1e-4));
    }
    SUBCASE("dense-only model is exact to truncation level") {
        GradientCheckOptions o;
        o.config = dense_only(6);
        o.include_kernels = false;
        CHECK(gradient_check(o).whole_model < 1e-8);
    }
    SUBCASE("a sign-flipped conv backward is caught") {
        GradientCheckOptions o;
        o.config = reduced_config();
        o.inject_conv_fault = true;
        const auto report = gradient_check(o);
        CHECK(report.whole_model == doctest::Approx(2.0).epsilon(0.01));
        CHECK_FALSE(report.passed(1e-4));
    }
}

TEST_CASE("checkpoint round trip") {
    ModelNet<float> m(ModelConfig{}, 77);
    // perturb BN state so running statistics are exercised
    for (auto& [name, t] : m.state())
        if (name.starts_with("bn"))
            for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += 0.01f * static_cast<float>(i % 7) + 0.5f;
    Normalizer norm = Normalizer::identity();
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
        norm.mean[j] = 0.1f * static_cast<float>(j);
        norm.std[j] = 1.0f + 0.01f * static_cast<float>(j);
    }
    const auto x = random_batch<float>(10, 384, 123);
    const auto before = m.predict(x);

    const auto path = temp_path("model.ckpt");
    save_checkpoint(path, m, norm, 1234, {{"seed", "7"}, {"input_len", "999"}});
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.step == 1234);
    CHECK(loaded.model.config() == m.config());
    CHECK(loaded.normalizer.mean == norm.mean);
    CHECK(loaded.normalizer.std == norm.std);
    CHECK(loaded.model.predict(x) == before);
    auto s1 = m.state(), s2 = loaded.model.state();
    REQUIRE(s1.size() == s2.size());
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(*s1[i].second == *s2[i].second);

    bool seed_kept = false, input_len_is_model = false;
    for (const auto& [k, v] : loaded.config) {
        seed_kept |= k == "seed" && v == "7";
        input_len_is_model |= k == "input_len" && v == "384";
        CHECK_FALSE((k == "input_len" && v == "999"));
    }
    CHECK(seed_kept);
    CHECK(input_len_is_model);
}

TEST_CASE("checkpoint from a modified config rebuilds that config") {
    ModelConfig c = reduced_config();
    c.convs = {{3, 5, 2}};
    c.fc_dims = {7, 1};
    c.output_relu = true;
    ModelNet<float> m(c, 2);
    const auto path = temp_path("small.ckpt");
    save_checkpoint(path, m, Normalizer::identity(32), 5);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.model.config() == c);
    CHECK(loaded.model.count_parameters() == m.count_parameters());
    const auto x = random_batch<float>(3, 32, 4);
    CHECK(loaded.model.predict(x) == m.predict(x));
}

TEST_CASE("checkpoint format guards") {
    ModelNet<float> m(reduced_config(), 2);
    const auto good = temp_path("good.ckpt");
    save_checkpoint(good, m, Normalizer::identity(32), 0);
    std::string bytes;
    {
        std::ifstream in(good, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [](const std::string& name, const std::string& content) {
        const auto p = temp_path(name);
        std::ofstream(p, std::ios::binary) << content;
        return p;
    };
    auto message = [](const std::filesystem::path& p) {
        try {
            load_checkpoint(p);
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    CHECK(message(write("magic.ckpt", wrong_magic)).find("not a checkpoint") != std::string::npos);

    std::string wrong_version = bytes;
    wrong_version[6] = 9;
    CHECK(message(write("version.ckpt", wrong_version)).find("unsupported checkpoint version") != std::string::npos);

    CHECK(message(write("truncated.ckpt", bytes.substr(0, bytes.size() / 2))).find("truncated") != std::string::npos);
    CHECK(message(write("trailing.ckpt", bytes + "zz")) != "no error");
    CHECK(message(temp_path("absent.ckpt")) != "no error");
}
