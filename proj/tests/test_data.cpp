#include "ctrlp/data.hpp"
#include "ctrlp/error.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

using namespace ctrlp;
using ctrlp::testing::temp_path;

namespace {

std::string csv_row(int patient, float fill, double target, std::size_t features = kFeatureCount) {
    std::string row = std::to_string(patient);
    for (std::size_t j = 0; j < features; ++j) row += "," + std::to_string(fill + 0.001f * static_cast<float>(j));
    return row + "," + std::to_string(target) + "\n";
}

std::filesystem::path write_text(const std::string& name, const std::string& content) {
    auto path = temp_path(name);
    std::ofstream(path) << content;
    return path;
}

std::string header() {
    std::string h = "patientId";
    for (std::size_t j = 0; j < kFeatureCount; ++j) h += ",value" + std::to_string(j);
    return h + ",reference\n";
}

Dataset column_dataset(std::initializer_list<float> column) {
    Dataset d;
    std::vector<float> x(kFeatureCount, 0.0f);
    int p = 0;
    for (float v : column) {
        x[0] = v;
        d.add(p++, x, 0.0);
    }
    return d;
}

} // namespace

TEST_CASE("load_dataset reads rows in file order") {
    auto path = write_text("three.csv", header() + csv_row(0, 1.0f, 10.5) + csv_row(0, 2.0f, 11.5) +
                                            csv_row(1, 3.0f, 50.25));
    const Dataset d = load_dataset(path);
    REQUIRE(d.size() == 3);
    CHECK(d.patient_ids() == std::vector<int>{0, 1});
    CHECK(d.target(0) == doctest::Approx(10.5));
    CHECK(d.target(2) == doctest::Approx(50.25));
    CHECK(d.features(1)[0] == doctest::Approx(2.0f));
    CHECK(d.features(2)[383] == doctest::Approx(3.383f));
    CHECK(d[2].patient_id == 1);
}

TEST_CASE("load_dataset rejects malformed input") {
    SUBCASE("short row names the row") {
        auto path = write_text("short.csv", header() + csv_row(0, 1.0f, 1.0) + csv_row(0, 1.0f, 1.0, 383));
        try {
            load_dataset(path);
            FAIL("expected an error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("row 2: expected 386 columns") != std::string::npos);
        }
    }
    SUBCASE("non-numeric cell") {
        std::string bad = csv_row(0, 1.0f, 1.0);
        bad.replace(bad.find(",") + 1, 1, "x");
        auto path = write_text("nan.csv", header() + bad);
        CHECK_THROWS_AS(load_dataset(path), DataError);
    }
    SUBCASE("empty file") {
        CHECK_THROWS_AS(load_dataset(write_text("empty.csv", "")), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset(temp_path("missing.csv")), DataError);
    }
}

TEST_CASE("synthetic CSV round-trips through the loader") {
    const Dataset d = ctrlp::testing::make_synthetic_dataset({.patients = 4, .min_slices = 5, .max_slices = 8});
    auto path = temp_path("synthetic.csv");
    ctrlp::testing::write_csv(d, path);
    const Dataset back = load_dataset(path);
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back.patient(i) == d.patient(i));
        CHECK(back.target(i) == doctest::Approx(d.target(i)).epsilon(1e-7));
    }
}

TEST_CASE("fit_normalizer uses population statistics") {
    const Normalizer n = fit_normalizer(column_dataset({1, 2, 3}), NormMode::per_feature);
    CHECK(n.mean[0] == doctest::Approx(2.0));
    CHECK(n.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    // the other 383 columns are all zero: mean 0, std clamped to 1
    CHECK(n.mean[5] == 0.0f);
    CHECK(n.std[5] == 1.0f);

    const Normalizer constant = fit_normalizer(column_dataset({5, 5, 5}), NormMode::per_feature);
    CHECK(constant.mean[0] == doctest::Approx(5.0));
    CHECK(constant.std[0] == 1.0f);

    CHECK_THROWS_AS(fit_normalizer(Dataset{}, NormMode::per_feature), UsageError);
}

TEST_CASE("apply_normalizer") {
    const Normalizer n = fit_normalizer(column_dataset({1, 2, 3}), NormMode::per_feature);
    std::vector<float> x(kFeatureCount, 0.0f);
    for (float v : {1.0f, 2.0f, 3.0f}) {
        x[0] = v;
        const auto out = n.apply(x);
        CHECK(out[0] == doctest::Approx((v - 2.0) / std::sqrt(2.0 / 3.0)).epsilon(1e-6));
    }
    x[0] = 1.0f;
    CHECK(n.apply(x)[0] == doctest::Approx(-1.2247).epsilon(1e-4));

    const Normalizer id = Normalizer::identity();
    std::vector<float> y(kFeatureCount);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = 0.37f * static_cast<float>(j) - 5.0f;
    CHECK(id.apply(y) == y);

    CHECK_THROWS_AS(n.apply(std::vector<float>(10)), UsageError);
}

TEST_CASE("per-sample normalization standardizes each vector") {
    Normalizer n;
    n.mode = NormMode::per_sample;
    const auto out = n.apply(std::vector<float>{1, 2, 3});
    CHECK(out[0] == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(out[1] == doctest::Approx(0.0));
    const auto flat = n.apply(std::vector<float>{4, 4, 4, 4});
    for (float v : flat) CHECK(v == 0.0f);
}

TEST_CASE("fit then apply yields standardized training columns") {
    const Dataset d = ctrlp::testing::make_synthetic_dataset({.patients = 6, .min_slices = 30, .max_slices = 50});
    const Normalizer n = fit_normalizer(d, NormMode::per_feature);
    Dataset normalized;
    for (std::size_t i = 0; i < d.size(); ++i) normalized.add(d.patient(i), n.apply(d.features(i)), d.target(i));
    const Normalizer again = fit_normalizer(normalized, NormMode::per_feature);
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
        if (n.std[j] == 1.0f && j % 97 == 0) continue; // constant column
        CHECK(std::abs(again.mean[j]) < 1e-5);
        CHECK(std::abs(again.std[j] - 1.0f) < 1e-4);
    }
}

TEST_CASE("make_patient_folds") {
    SUBCASE("74 patients into 5 folds") {
        const Dataset d = ctrlp::testing::make_synthetic_dataset({.patients = 74, .min_slices = 2, .max_slices = 4});
        const FoldPlan plan = make_patient_folds(d, 5, 7);
        std::multiset<std::size_t> sizes;
        for (int f = 0; f < 5; ++f) sizes.insert(plan.patients_in(f).size());
        CHECK(sizes == std::multiset<std::size_t>{14, 15, 15, 15, 15});
        CHECK(plan.assignments.size() == 74);
    }
    SUBCASE("5 patients, k=5: one per fold") {
        const Dataset d = ctrlp::testing::make_synthetic_dataset({.patients = 5, .min_slices = 3, .max_slices = 3});
        const FoldPlan plan = make_patient_folds(d, 5, 3);
        for (int f = 0; f < 5; ++f) CHECK(plan.patients_in(f).size() == 1);
    }
    SUBCASE("deterministic in the seed") {
        const Dataset d = ctrlp::testing::make_synthetic_dataset({.patients = 20, .min_slices = 2, .max_slices = 3});
        CHECK(make_patient_folds(d, 5, 11).assignments == make_patient_folds(d, 5, 11).assignments);
        const FoldPlan other = make_patient_folds(d, 5, 12);
        std::vector<int> sizes;
        for (int f = 0; f < 5; ++f) CHECK(other.patients_in(f).size() == 4);
    }
    SUBCASE("errors") {
        const Dataset d = ctrlp::testing::make_synthetic_dataset({.patients = 3, .min_slices = 2, .max_slices = 3});
        CHECK_THROWS_AS(make_patient_folds(d, 4, 1), UsageError);
        CHECK_THROWS_AS(make_patient_folds(d, 1, 1), UsageError);
    }
}

TEST_CASE("folds never leak patients and cover every row once") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Dataset d = ctrlp::testing::make_synthetic_dataset({.patients = 17, .min_slices = 3, .max_slices = 9, .seed = seed});
        const FoldPlan plan = make_patient_folds(d, 5, seed);
        std::vector<int> seen(d.size(), 0);
        for (int f = 0; f < plan.k; ++f) {
            std::set<int> train_patients, test_patients;
            for (std::size_t r : plan.train_rows(d, f)) train_patients.insert(d.patient(r));
            for (std::size_t r : plan.test_rows(d, f)) {
                test_patients.insert(d.patient(r));
                ++seen[r];
            }
            for (int p : test_patients) CHECK_FALSE(train_patients.contains(p));
        }
        for (int s : seen) CHECK(s == 1);
    }
}

TEST_CASE("iterate_batches") {
    std::vector<std::size_t> idx(10);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto batches = iterate_batches(idx, 4, 5, 0);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 4);
    CHECK(batches[1].size() == 4);
    CHECK(batches[2].size() == 2);

    CHECK(iterate_batches(idx, 4, 5, 0) == batches);
    CHECK(iterate_batches(idx, 4, 5, 1) != batches);

    std::vector<std::size_t> big(42800);
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = i;
    CHECK(iterate_batches(big, 256, 1, 0).size() == 168);

    CHECK_THROWS_AS(iterate_batches(idx, 0, 1, 0), UsageError);
    CHECK_THROWS_AS(iterate_batches({}, 4, 1, 0), UsageError);
}

TEST_CASE("every epoch is a permutation") {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 257; ++i) idx.push_back(3 * i + 1);
    for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
        std::multiset<std::size_t> seen;
        for (const auto& b : iterate_batches(idx, 32, 9, epoch)) seen.insert(b.begin(), b.end());
        CHECK(seen == std::multiset<std::size_t>(idx.begin(), idx.end()));
    }
}
