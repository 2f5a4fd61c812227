#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "panova/core.hpp"
#include "panova/intervals.hpp"
#include "panova/mathutil.hpp"
#include "panova/rng.hpp"
#include "test_support.hpp"

using namespace panova;
using core::ComponentPredictive;
using core::FactorTree;
using core::PredictiveMixture;
using testsupport::matches_printed;

namespace {

PredictiveMixture make_mixture(std::vector<double> w, std::vector<double> means,
                               std::vector<double> vars) {
    PredictiveMixture m;
    m.weights = std::move(w);
    for (std::size_t i = 0; i < means.size(); ++i)
        m.components.push_back(ComponentPredictive::gaussian(means[i], vars[i]));
    return m;
}

// Monte-Carlo moments of a mixture, the test-side oracle.
std::pair<double, double> mc_moments(const PredictiveMixture& m, int n, std::uint64_t seed) {
    Rng rng(seed);
    KahanSum sum, sumsq;
    for (int i = 0; i < n; ++i) {
        const double x = intervals::sample_mixture(m, rng);
        sum.add(x);
        sumsq.add(x * x);
    }
    const double mean = sum.value() / n;
    return {mean, sumsq.value() / n - mean * mean};
}

}  // namespace

TEST_CASE("component validation") {
    CHECK_THROWS_AS(ComponentPredictive::gaussian(0.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(ComponentPredictive::empirical({1.0}), std::invalid_argument);
    CHECK_THROWS_AS(ComponentPredictive::binomial_count(6, 1.5), std::invalid_argument);

    auto b = ComponentPredictive::binomial_count(6, 0.3);
    CHECK(b.mean == doctest::Approx(1.8));
    CHECK(b.variance == doctest::Approx(6 * 0.3 * 0.7));

    // binomial moments must stay consistent with (trials, p) to 1e-10
    b.mean += 1e-8;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);

    const auto e = ComponentPredictive::empirical({1.0, 2.0, 3.0, 4.0});
    CHECK(e.mean == doctest::Approx(2.5));
    CHECK(e.variance == doctest::Approx(5.0 / 3.0));  // unbiased, divisor n-1
}

TEST_CASE("mixture_mean") {
    CHECK(core::mixture_mean(make_mixture({1.0}, {3.0}, {4.0})) == doctest::Approx(3.0));
    CHECK(core::mixture_mean(make_mixture({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0})) ==
          doctest::Approx(0.0));

    const auto m = make_mixture({0.74, 0.25, 0.01}, {2.0, 4.0, 10.0}, {1.0, 1.0, 1.0});
    CHECK(core::mixture_mean(m) == doctest::Approx(2.58).epsilon(1e-12));
    // independent oracle: 1e6-draw Monte Carlo within 3*SE
    const auto [mc_mean, mc_var] = mc_moments(m, 1000000, 17);
    const double se = std::sqrt(mc_var / 1e6);
    CHECK(std::abs(core::mixture_mean(m) - mc_mean) < 3 * se);

    PredictiveMixture empty;
    CHECK_THROWS_WITH_AS(core::mixture_mean(empty), "empty mixture", std::invalid_argument);
}

TEST_CASE("mixture_variance") {
    CHECK(core::mixture_variance(make_mixture({1.0}, {5.0}, {2.5})) == doctest::Approx(2.5));

    const auto m = make_mixture({0.3, 0.7}, {0.0, 2.0}, {1.0, 1.0});
    const double v = core::mixture_variance(m);
    CHECK(v == doctest::Approx(1.84).epsilon(1e-12));  // 1 + 0.3*0.7*4
    const auto [mc_mean, mc_var] = mc_moments(m, 1000000, 99);
    (void)mc_mean;
    const double se = std::sqrt(2.0 * v * v / 1e6);
    CHECK(std::abs(v - mc_var) < 3 * se);
}

TEST_CASE("two_term_decompose") {
    const auto equal_means = make_mixture({0.2, 0.8}, {1.5, 1.5}, {1.0, 3.0});
    CHECK(core::two_term_decompose(equal_means).between == doctest::Approx(0.0));

    const auto m = make_mixture({0.5, 0.5}, {0.0, 4.0}, {2.0, 2.0});
    const auto tt = core::two_term_decompose(m);
    CHECK(tt.within == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(tt.between == doctest::Approx(4.0).epsilon(1e-14));

    // stored two-leaf fixture reproducing within 2.39 / between 0.58
    const auto tree = core::load_tree(testsupport::data_path("trees/stack_two_term.json"));
    const auto fixture = core::flatten(tree);
    const auto ft = core::two_term_decompose(fixture);
    CHECK(matches_printed(ft.within, 2.39, 2));
    CHECK(matches_printed(ft.between, 0.58, 2));
    CHECK(matches_printed(core::mixture_variance(fixture), 2.97, 2));
}

TEST_CASE("decompose_k on stored grid") {
    const auto tree = core::load_tree(testsupport::data_path("trees/grid_links_models.json"));
    const auto report = core::decompose_k(tree);
    REQUIRE(report.terms.size() == 3);
    CHECK(matches_printed(report.terms[0], 0.0017, 4));
    CHECK(matches_printed(report.terms[1], 0.0996, 4));
    CHECK(matches_printed(report.terms[2], 0.01469, 5));
    CHECK(matches_printed(report.total, 0.11599, 5));
    CHECK(matches_printed(report.proportions[0], 0.0147, 4));
    CHECK(matches_printed(report.proportions[1], 0.86, 2));
    CHECK(matches_printed(report.proportions[2], 0.127, 3));
}

TEST_CASE("decompose_k basics") {
    Rng rng(4);
    // K=1 with identical leaf means: between term is zero
    FactorTree t;
    t.factors = {"V1"};
    t.levels = {{"a", "b", "c"}};
    t.weights = {testsupport::random_simplex(rng, 3)};
    for (int i = 0; i < 3; ++i)
        t.leaves.push_back(ComponentPredictive::gaussian(1.25, 0.5 + i * 0.25));
    const auto report = core::decompose_k(t);
    CHECK(std::abs(report.terms[0]) <= 1e-12);

    // flatten-and-compare oracle over 100 random K=2 trees
    for (int rep = 0; rep < 100; ++rep) {
        const auto tree = testsupport::random_tree(
            rng, {2 + static_cast<int>(rng.uniform_int(3)), 2 + static_cast<int>(rng.uniform_int(3))});
        const auto rk = core::decompose_k(tree);
        const double total = core::mixture_variance(core::flatten(tree));
        KahanSum sum3;
        for (double term : rk.terms) sum3.add(term);
        CHECK(sum3.value() == doctest::Approx(total).epsilon(1e-9));
    }
}

TEST_CASE("law of total variance identity over random mixtures") {
    Rng rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
        const auto m = testsupport::random_mixture(rng, 1 + static_cast<int>(rng.uniform_int(8)));
        const auto tt = core::two_term_decompose(m);
        const double total = core::mixture_variance(m);
        CHECK(std::abs(tt.within + tt.between - total) <= 1e-12 * std::max(1.0, total));
    }
}

TEST_CASE("tower consistency across K") {
    Rng rng(12);
    for (int cases = 0; cases < 1000; ++cases) {
        const int K = 1 + static_cast<int>(rng.uniform_int(4));
        std::vector<int> shape;
        for (int k = 0; k < K; ++k) shape.push_back(1 + static_cast<int>(rng.uniform_int(4)));
        const auto tree = testsupport::random_tree(rng, shape);
        const auto report = core::decompose_k(tree);
        const double total = core::mixture_variance(core::flatten(tree));
        KahanSum sum;
        for (double term : report.terms) sum.add(term);
        REQUIRE(std::abs(sum.value() - total) <= 1e-9 * std::max(1.0, std::abs(total)));
    }
}

TEST_CASE("clause (i)/(ii) agreement: non-final terms sum to the between term") {
    Rng rng(13);
    for (int rep = 0; rep < 300; ++rep) {
        const int K = 1 + static_cast<int>(rng.uniform_int(3));
        std::vector<int> shape;
        for (int k = 0; k < K; ++k) shape.push_back(2 + static_cast<int>(rng.uniform_int(3)));
        const auto tree = testsupport::random_tree(rng, shape);
        const auto report = core::decompose_k(tree);
        const auto tt = core::two_term_decompose(core::flatten(tree));
        KahanSum between;
        for (int k = 0; k < K; ++k) between.add(report.terms[static_cast<std::size_t>(k)]);
        CHECK(between.value() == doctest::Approx(tt.between).epsilon(1e-9));
        CHECK(report.terms.back() == doctest::Approx(tt.within).epsilon(1e-9));
    }
}

TEST_CASE("weight degeneracy: single live leaf") {
    FactorTree t;
    t.factors = {"V1", "V2"};
    t.levels = {{"a", "b"}, {"c", "d"}};
    t.weights = {{1.0, 0.0}, {1.0, 0.0, 0.25, 0.75}};
    t.leaves = {ComponentPredictive::gaussian(3.0, 1.7), ComponentPredictive::gaussian(-5.0, 0.2),
                ComponentPredictive::gaussian(9.0, 4.0), ComponentPredictive::gaussian(2.0, 0.9)};
    const auto report = core::decompose_k(t);
    CHECK(report.terms[0] == 0.0);
    CHECK(report.terms[1] == 0.0);
    CHECK(report.terms[2] == doctest::Approx(1.7).epsilon(1e-14));
    CHECK(report.total == doctest::Approx(1.7).epsilon(1e-14));
}

TEST_CASE("sibling permutation invariance") {
    Rng rng(14);
    for (int rep = 0; rep < 50; ++rep) {
        auto tree = testsupport::random_tree(rng, {3, 2});
        const auto before = core::decompose_k(tree);
        // swap the first two levels of factor 1 (weights, labels, leaf blocks)
        std::swap(tree.weights[0][0], tree.weights[0][1]);
        std::swap(tree.levels[0][0], tree.levels[0][1]);
        for (int j = 0; j < 2; ++j) {
            std::swap(tree.weights[1][static_cast<std::size_t>(0 * 2 + j)],
                      tree.weights[1][static_cast<std::size_t>(1 * 2 + j)]);
            std::swap(tree.leaves[static_cast<std::size_t>(0 * 2 + j)],
                      tree.leaves[static_cast<std::size_t>(1 * 2 + j)]);
        }
        const auto after = core::decompose_k(tree);
        for (std::size_t k = 0; k < before.terms.size(); ++k)
            CHECK(std::abs(before.terms[k] - after.terms[k]) <= 1e-12);
    }
}

TEST_CASE("tree JSON round trip") {
    Rng rng(15);
    const auto tree = testsupport::random_tree(rng, {3, 2, 4});
    const auto text = core::tree_to_json(tree);
    const auto back = core::tree_from_json(text);
    CHECK(core::tree_to_json(back) == text);  // canonical, byte-identical
    const auto r1 = core::decompose_k(tree);
    const auto r2 = core::decompose_k(back);
    for (std::size_t k = 0; k < r1.terms.size(); ++k) CHECK(r1.terms[k] == r2.terms[k]);

    // all component families survive the round trip
    FactorTree mixed;
    mixed.factors = {"f"};
    mixed.levels = {{"a", "b", "c"}};
    mixed.weights = {{0.25, 0.5, 0.25}};
    mixed.leaves = {ComponentPredictive::gaussian(0.5, 2.0),
                    ComponentPredictive::binomial_count(6, 0.37),
                    ComponentPredictive::empirical({0.9, 1.1, 3.4, -2.2})};
    const auto mixed_text = core::tree_to_json(mixed);
    CHECK(core::tree_to_json(core::tree_from_json(mixed_text)) == mixed_text);
}

TEST_CASE("malformed trees are rejected") {
    CHECK_THROWS_WITH_AS(
        core::tree_from_json(R"({"factors":["a","b"],"levels":[["x","y"],["u","v"]],
          "weights":[[0.5,0.5],[[0.5,0.5],[1.0]]],
          "leaves":[{"family":"gaussian","mean":0,"variance":1},
                    {"family":"gaussian","mean":0,"variance":1},
                    {"family":"gaussian","mean":0,"variance":1},
                    {"family":"gaussian","mean":0,"variance":1}]})"),
        "non-rectangular factor tree", std::invalid_argument);

    // non-simplex weights are an error, never silently normalized
    FactorTree t;
    t.factors = {"V1"};
    t.levels = {{"a", "b"}};
    t.weights = {{0.6, 0.5}};
    t.leaves = {ComponentPredictive::gaussian(0, 1), ComponentPredictive::gaussian(1, 1)};
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);

    // leaf count mismatch
    t.weights = {{0.5, 0.5}};
    t.leaves.pop_back();
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("report serialization") {
    const auto tree = core::load_tree(testsupport::data_path("trees/grid_links_models.json"));
    const auto report = core::decompose_k(tree);
    const auto csv = core::report_to_csv(report);
    CHECK(csv.find("source,interpretation,variance,proportion") == 0);
    CHECK(csv.find("Total") != std::string::npos);
    const auto js = core::report_to_json(report);
    CHECK(js.find("\"terms\"") != std::string::npos);
}
