#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "panova/core.hpp"
#include "panova/mathutil.hpp"
#include "panova/rng.hpp"
#include "panova/vartest.hpp"
#include "test_support.hpp"

using namespace panova;
using vartest::asl_test;
using vartest::NullForm;

namespace {

std::vector<double> jittered(double center, double spread, int B, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> z(static_cast<std::size_t>(B));
    for (auto& v : z) v = center + spread * rng.normal();
    return z;
}

// A pipeline that ignores the data except through a summary, so replicates
// differ but stay deterministic.
core::FactorTree toy_pipeline(const fit::Dataset& d, double mean_gap) {
    core::FactorTree t;
    t.factors = {"m"};
    t.levels = {{"a", "b"}};
    t.weights = {{0.5, 0.5}};
    const double shift = d.y.mean();
    t.leaves = {core::ComponentPredictive::gaussian(shift, 1.0),
                core::ComponentPredictive::gaussian(shift + mean_gap, 1.0)};
    return t;
}

fit::Dataset toy_data(int n, std::uint64_t seed) {
    Rng rng(seed);
    fit::Dataset d;
    d.X = Eigen::MatrixXd::Zero(n, 1);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        d.X(i, 0) = rng.normal();
        d.y(i) = rng.normal();
    }
    d.feature_names = {"x1"};
    return d;
}

}  // namespace

TEST_CASE("asl_test contracts") {
    CHECK_THROWS_AS(asl_test({0.1}, 0.05, 1000, 1), std::invalid_argument);
    CHECK_THROWS_AS(asl_test({0.1, 0.2}, 0.05, 999, 1), std::invalid_argument);
    CHECK_THROWS_AS(asl_test({0.1, 0.2}, 0.0, 1000, 1), std::invalid_argument);

    // z clearly below tau: reject with ASL ~ 0
    const auto far_below = jittered(0.001, 0.0002, 100, 3);
    const auto low = asl_test(far_below, 0.05, 2000, 5);
    CHECK(low.asl <= 0.01);
    CHECK(low.reject_at.at(0.05));

    // z clearly above tau: retain with ASL ~ 1
    const auto far_above = jittered(0.86, 0.01, 100, 4);
    const auto high = asl_test(far_above, 0.05, 2000, 5);
    CHECK(high.asl >= 0.99);
    CHECK_FALSE(high.reject_at.at(0.05));

    // invariant: asl equals the count fraction, all z in [0,1]
    CHECK(low.J == 2000);
    CHECK(low.z_bar == doctest::Approx(mean_of(far_below)));
}

TEST_CASE("the printed grid ratios give the expected decisions") {
    // term ratio ~0.0147 at tau 0.05: reject (ASL ~ 0)
    const auto z1 = jittered(0.0147, 0.002, 200, 11);
    CHECK(asl_test(z1, 0.05, 10000, 13).asl <= 0.01);
    // term ratio ~0.86 at tau 0.05: retain (ASL ~ 1)
    const auto z2 = jittered(0.86, 0.02, 200, 12);
    CHECK(asl_test(z2, 0.05, 10000, 13).asl >= 0.99);
}

TEST_CASE("degenerate samples") {
    std::vector<double> zeros(60, 0.0);
    const auto out = asl_test(zeros, 0.05, 1000, 9);
    CHECK(out.degenerate);
    CHECK(out.asl == 0.0);  // z_bar < tau: reject
    CHECK(out.reject_at.at(0.05));

    std::vector<double> highs(60, 0.4);
    const auto out2 = asl_test(highs, 0.05, 1000, 9);
    CHECK(out2.degenerate);
    CHECK(out2.asl == 1.0);
}

TEST_CASE("ASL is monotone nonincreasing in tau and deterministic") {
    Rng rng(61);
    for (int rep = 0; rep < 25; ++rep) {
        const auto z = jittered(0.05 + 0.3 * rng.uniform(), 0.02 + 0.1 * rng.uniform(), 80,
                                100 + static_cast<std::uint64_t>(rep));
        double prev = 1.0 + 1e-9;
        for (double tau = 0.02; tau < 0.5; tau += 0.02) {
            const auto out = asl_test(z, tau, 1000, 77);
            CHECK(out.asl <= prev);
            prev = out.asl;
        }
    }
    const auto z = jittered(0.2, 0.05, 100, 5);
    const auto a = asl_test(z, 0.1, 5000, 123);
    const auto b = asl_test(z, 0.1, 5000, 123);
    CHECK(a.asl == b.asl);
    CHECK(a.t_stat == b.t_stat);
}

TEST_CASE("calibration at the null boundary") {
    // z i.i.d. with mean exactly tau: nominal-0.05 rejections ~ 5%
    const double tau = 0.2;
    Rng rng(62);
    int rejects = 0;
    const int trials = 150;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> z(100);
        for (auto& v : z) v = tau + 0.04 * rng.normal();
        const auto out = asl_test(z, tau, 1000, 900 + static_cast<std::uint64_t>(trial));
        if (out.asl < 0.05) ++rejects;
    }
    const double rate = static_cast<double>(rejects) / trials;
    CHECK(rate >= 0.01);
    CHECK(rate <= 0.11);
}

TEST_CASE("literal recentring form makes every null statistic ~0") {
    const auto z = jittered(0.3, 0.05, 100, 15);
    const auto lit = asl_test(z, 0.05, 1000, 21, NullForm::literal);
    // t = (0.3 - 0.05)/se >> 0 while every t~_j ~ 0: ASL = 1
    CHECK(lit.asl >= 0.99);
    const auto lit2 = asl_test(z, 0.45, 1000, 21, NullForm::literal);
    // now t << 0 and t~_j ~ 0: ASL = 0
    CHECK(lit2.asl <= 0.01);
}

TEST_CASE("bootstrap_ratio_samples") {
    const auto d = toy_data(40, 71);

    // single-model pipeline: between term is identically zero
    const vartest::TreePipeline single = [](const fit::Dataset& data, std::uint64_t) {
        core::FactorTree t;
        t.factors = {"m"};
        t.levels = {{"only"}};
        t.weights = {{1.0}};
        t.leaves = {core::ComponentPredictive::gaussian(data.y.mean(), 1.0)};
        return t;
    };
    const auto zs = vartest::bootstrap_ratio_samples(single, d, 0, 60, 5);
    for (double z : zs.values) CHECK(z == 0.0);
    CHECK(zs.out_of_range.empty());

    // fixed-tree pipeline: all replicates identical
    const vartest::TreePipeline fixed = [](const fit::Dataset&, std::uint64_t) {
        core::FactorTree t;
        t.factors = {"m"};
        t.levels = {{"a", "b"}};
        t.weights = {{0.5, 0.5}};
        t.leaves = {core::ComponentPredictive::gaussian(0.0, 1.0),
                    core::ComponentPredictive::gaussian(1.0, 1.0)};
        return t;
    };
    const auto zf = vartest::bootstrap_ratio_samples(fixed, d, 0, 60, 5);
    for (double z : zf.values) CHECK(z == zf.values[0]);

    // varying pipeline: deterministic given the seed, parallel agrees with serial
    const vartest::TreePipeline vary = [](const fit::Dataset& data, std::uint64_t) {
        return toy_pipeline(data, 0.5);
    };
    const auto z1 = vartest::bootstrap_ratio_samples(vary, d, 0, 60, 17, 1);
    const auto z2 = vartest::bootstrap_ratio_samples(vary, d, 0, 60, 17, 2);
    REQUIRE(z1.values.size() == z2.values.size());
    for (std::size_t i = 0; i < z1.values.size(); ++i) CHECK(z1.values[i] == z2.values[i]);

    CHECK_THROWS_AS(vartest::bootstrap_ratio_samples(vary, d, 0, 10, 1), std::invalid_argument);
}

TEST_CASE("test_all_terms shares replicates and stays monotone over taus") {
    const auto d = toy_data(50, 73);
    const vartest::TreePipeline vary = [](const fit::Dataset& data, std::uint64_t) {
        return toy_pipeline(data, 0.8);
    };
    const auto table = vartest::test_all_terms(vary, d, 2, {0.01, 0.05, 0.1, 0.2}, 80, 1000, 3);
    REQUIRE(table.outcomes.size() == 2);
    for (const auto& row : table.outcomes) {
        for (std::size_t t = 1; t < row.size(); ++t) CHECK(row[t].asl <= row[t - 1].asl + 1e-15);
    }
    // the shared Z matrix: between + within ratios sum to 1 per replicate
    for (std::size_t b = 0; b < table.z[0].size(); ++b)
        CHECK(table.z[0][b] + table.z[1][b] == doctest::Approx(1.0).epsilon(1e-12));

    // K=1 single-level tree: between-term ASL = 0 for every tau
    const vartest::TreePipeline single = [](const fit::Dataset& data, std::uint64_t) {
        core::FactorTree t;
        t.factors = {"m"};
        t.levels = {{"only"}};
        t.weights = {{1.0}};
        t.leaves = {core::ComponentPredictive::gaussian(data.y.mean(), 1.0)};
        return t;
    };
    const auto ts = vartest::test_all_terms(single, d, 2, {0.01, 0.05, 0.1}, 60, 1000, 3);
    for (const auto& out : ts.outcomes[0]) {
        CHECK(out.degenerate);
        CHECK(out.asl == 0.0);
    }

    const auto csv = vartest::term_table_to_csv(ts, {"between", "within"});
    CHECK(csv.find("between") != std::string::npos);
    CHECK(csv.find("(") != std::string::npos);
}

TEST_CASE("equal conditional means reject the between term almost surely") {
    // Pipeline whose component means genuinely coincide; sampling noise in
    // the data never separates them, so the ratio is ~0 and H0 (>= 0.05) is
    // rejected essentially always.
    int rejects = 0;
    const int trials = 40;
    for (int trial = 0; trial < trials; ++trial) {
        const auto d = toy_data(30, 200 + static_cast<std::uint64_t>(trial));
        const vartest::TreePipeline equal = [](const fit::Dataset& data, std::uint64_t) {
            core::FactorTree t;
            t.factors = {"m"};
            t.levels = {{"a", "b"}};
            t.weights = {{0.5, 0.5}};
            const double m = data.y.mean();
            t.leaves = {core::ComponentPredictive::gaussian(m, 1.0),
                        core::ComponentPredictive::gaussian(m, 1.0 + 0.1 * std::abs(m))};
            return t;
        };
        const auto zs = vartest::bootstrap_ratio_samples(equal, d, 0, 200, 10 + trial);
        const auto out = asl_test(zs.values, 0.05, 10000, 30 + trial);
        if (out.asl < 0.05) ++rejects;
    }
    CHECK(rejects >= static_cast<int>(0.95 * trials));
}

TEST_CASE("z samples out of [0,1] are flagged") {
    const auto d = toy_data(20, 80);
    // a deliberately broken pipeline whose "term" exceeds the total
    const vartest::TreePipeline broken = [](const fit::Dataset&, std::uint64_t) {
        core::FactorTree t;
        t.factors = {"m"};
        t.levels = {{"a", "b"}};
        t.weights = {{0.5, 0.5}};
        t.leaves = {core::ComponentPredictive::gaussian(-1.0, 0.0),
                    core::ComponentPredictive::gaussian(1.0, 0.0)};
        return t;
    };
    // between = 1, within = 0: ratio exactly 1, inside the bound, no flags
    const auto zs = vartest::bootstrap_ratio_samples(broken, d, 0, 60, 4);
    CHECK(zs.out_of_range.empty());
    for (double z : zs.values) CHECK(z == doctest::Approx(1.0));
}

TEST_CASE("TestOutcome JSON") {
    const auto z = jittered(0.1, 0.02, 60, 33);
    const auto out = asl_test(z, 0.05, 1000, 2);
    const auto js = out.to_json();
    CHECK(js.find("\"asl\"") != std::string::npos);
    CHECK(js.find("\"reject_at\"") != std::string::npos);
    CHECK(js.find("\"shifted-null\"") != std::string::npos);
}
