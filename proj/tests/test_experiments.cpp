#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "panova/core.hpp"
#include "panova/csvio.hpp"
#include "panova/experiments.hpp"
#include "panova/mathutil.hpp"
#include "panova/quadform.hpp"
#include "test_support.hpp"

using namespace panova;
namespace fs = std::filesystem;
using experiments::StudyConfig;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

StudyConfig smoke_shrinkage() {
    StudyConfig cfg;
    cfg.study = "shrinkage";
    cfg.n = 40;
    cfg.p = 8;
    cfg.n_signal = 3;
    cfg.replicates = 2;
    cfg.eval_draws = 2000;
    cfg.boot_B = 50;
    cfg.inner_B = 50;
    cfg.J = 1000;
    cfg.taus = {0.05, 0.5};
    cfg.seed = 3;
    cfg.threads = 2;
    return cfg;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config JSON round trip and validation") {
    StudyConfig cfg;
    cfg.study = "n-sweep";
    cfg.n_list = {20, 50};
    cfg.seed = 17;
    const auto text = cfg.to_json();
    const auto back = StudyConfig::from_json_text(text);
    CHECK(back.study == "n-sweep");
    CHECK(back.n_list == std::vector<int>{20, 50});
    CHECK(back.seed == 17);

    CHECK_THROWS_AS(StudyConfig::from_json_text(R"({"stdy": "shrinkage"})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(StudyConfig::from_json_text(R"({"taus": [1.5]})"), std::invalid_argument);
    CHECK_THROWS_AS(StudyConfig::from_json_text("not json"), std::invalid_argument);
}

TEST_CASE("unknown study names list the options") {
    StudyConfig cfg;
    cfg.study = "mystery";
    try {
        experiments::run_study(cfg, "");
        CHECK(false);
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("mystery") != std::string::npos);
        CHECK(msg.find("shrinkage") != std::string::npos);
        CHECK(msg.find("n-sweep") != std::string::npos);
    }
}

TEST_CASE("generators are deterministic given the seed") {
    StudyConfig cfg;
    cfg.n = 30;
    cfg.p = 5;
    cfg.n_signal = 2;
    const auto a = experiments::generate_sparse_gaussian(cfg, 99);
    const auto b = experiments::generate_sparse_gaussian(cfg, 99);
    CHECK(a.data.y == b.data.y);
    CHECK(a.x_new == b.x_new);
    CHECK(a.data.n() == 29);  // one row held out as the prediction point

    const auto g1 = experiments::generate_binomial(cfg, 25, 5);
    const auto g2 = experiments::generate_binomial(cfg, 25, 5);
    CHECK(g1.data.y == g2.data.y);
    CHECK(g1.data.is_binomial());
    CHECK(g1.p_new == g2.p_new);
}

TEST_CASE("single-method shrinkage study: weight one, between-term zero") {
    auto cfg = smoke_shrinkage();
    cfg.methods = {"lasso"};
    cfg.replicates = 1;
    cfg.run_tests = false;
    const auto res = experiments::run_shrinkage_study(cfg, "");
    REQUIRE(res.replicates.size() == 1);
    CHECK(res.replicates[0].stacking_weights[0] == 1.0);
    CHECK(res.replicates[0].between == 0.0);
    CHECK(res.replicates[0].ratio == 0.0);
}

TEST_CASE("shrinkage smoke study is internally consistent") {
    const auto cfg = smoke_shrinkage();
    const auto res = experiments::run_shrinkage_study(cfg, "");
    REQUIRE(res.replicates.size() == 2);
    for (const auto& rep : res.replicates) {
        KahanSum wsum;
        for (double w : rep.stacking_weights) wsum.add(w);
        CHECK(wsum.value() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(rep.within + rep.between == doctest::Approx(rep.stack_variance).epsilon(1e-12));
        CHECK(rep.ratio >= 0.0);
        CHECK(rep.ratio <= 1.0);
        CHECK(rep.stack_coverage >= 0.0);
        CHECK(rep.stack_coverage <= 1.0);
        REQUIRE(rep.asl.size() == 2);
        // monotone over the tau sweep
        CHECK(rep.asl[1] <= rep.asl[0] + 1e-15);
    }
}

TEST_CASE("shrinkage study outputs are byte-identical across reruns") {
    auto cfg = smoke_shrinkage();
    cfg.replicates = 1;
    cfg.taus = {0.05};
    const auto d1 = fresh_dir("panova_det_a");
    const auto d2 = fresh_dir("panova_det_b");
    experiments::run_study(cfg, d1.string());
    experiments::run_study(cfg, d2.string());
    for (const char* f : {"replicates.csv", "table_summary.csv", "decomposition.csv", "tests.csv"}) {
        const auto a = slurp(d1 / f);
        const auto b = slurp(d2 / f);
        CHECK(a == b);
        CHECK(!a.empty());
    }
    // manifests agree minus timestamps
    auto ma = nlohmann::json::parse(slurp(d1 / "manifest.json"));
    auto mb = nlohmann::json::parse(slurp(d2 / "manifest.json"));
    ma.erase("runtime_seconds");
    ma.erase("started_at");
    mb.erase("runtime_seconds");
    mb.erase("started_at");
    CHECK(ma == mb);
}

TEST_CASE("binomial grid tree basics") {
    StudyConfig cfg;
    const auto gen = experiments::generate_binomial(cfg, 60, 21);

    // single link, intercept-only set: every between term is zero
    const auto tree = experiments::binomial_grid_tree(
        gen.data, gen.x_new, {fit::Link::logit}, {{}}, "count", cfg.trials);
    const auto report = core::decompose_k(tree);
    CHECK(report.terms[0] == 0.0);
    CHECK(report.terms[1] == 0.0);
    CHECK(report.terms[2] > 0.0);

    // full grid: decomposition sum matches the flattened mixture
    const auto sets = experiments::default_variable_sets(3);
    CHECK(sets.size() == 8);       // 7 nonempty + intercept-only
    CHECK(sets.back().empty());    // "no effect" is last
    const auto grid_tree = experiments::binomial_grid_tree(
        gen.data, gen.x_new, {fit::Link::logit, fit::Link::cloglog, fit::Link::probit}, sets,
        "count", cfg.trials);
    CHECK(grid_tree.leaf_count() == 24);
    const auto rep2 = core::decompose_k(grid_tree);
    const double total = core::mixture_variance(core::flatten(grid_tree));
    KahanSum sum;
    for (double t : rep2.terms) sum.add(t);
    CHECK(sum.value() == doctest::Approx(total).epsilon(1e-9));

    // quadratic-form route agrees termwise on the study tree
    const auto qf = quadform::quadratic_forms(grid_tree);
    for (std::size_t k = 0; k < rep2.terms.size(); ++k)
        CHECK(qf.term_values[k] == doctest::Approx(rep2.terms[k]).epsilon(1e-9));
}

TEST_CASE("binomial grid study end to end") {
    StudyConfig cfg;
    cfg.study = "binomial-grid";
    cfg.n = 80;
    cfg.grid_structure = "subsets";
    cfg.grid_covariates = 2;
    cfg.links = {"logit", "probit"};
    cfg.boot_B = 50;
    cfg.J = 1000;
    cfg.taus = {0.05};
    cfg.seed = 13;
    cfg.threads = 2;
    const auto dir = fresh_dir("panova_grid");
    const auto res = experiments::run_binomial_grid_study(cfg, dir.string());
    CHECK(res.tree.depth() == 2);
    CHECK(res.tree.leaf_count() == 2 * 4);  // 2 links x (3 nonempty + none)
    REQUIRE(res.tests.has_value());
    CHECK(res.tests->outcomes.size() == 3);
    CHECK(fs::exists(dir / "decomposition.csv"));
    CHECK(fs::exists(dir / "weights.csv"));
    CHECK(fs::exists(dir / "tree.json"));
    CHECK(fs::exists(dir / "tests.csv"));

    // the saved tree reloads and decomposes identically
    const auto reloaded = core::load_tree((dir / "tree.json").string());
    const auto r1 = core::decompose_k(res.tree);
    const auto r2 = core::decompose_k(reloaded);
    for (std::size_t k = 0; k < r1.terms.size(); ++k)
        CHECK(r1.terms[k] == doctest::Approx(r2.terms[k]).epsilon(1e-15));
}

TEST_CASE("n-sweep smoke") {
    StudyConfig cfg;
    cfg.study = "n-sweep";
    cfg.n_list = {30};
    cfg.replicates = 3;
    cfg.links = {"logit"};
    cfg.boot_B = 50;
    cfg.J = 1000;
    cfg.taus = {0.05};
    cfg.seed = 29;
    cfg.threads = 2;
    const auto dir = fresh_dir("panova_sweep");
    const auto res = experiments::run_n_sweep(cfg, dir.string());
    REQUIRE(res.rows.size() == 1);
    CHECK(res.rows[0].n == 30);
    CHECK(res.rows[0].median_terms.size() == 3);
    CHECK(res.rows[0].median_total > 0.0);
    CHECK(res.rows[0].prop_replicates.size() == 3);
    CHECK(res.rows[0].prop_replicates[0].size() == 3);
    CHECK(fs::exists(dir / "curves_absolute.csv"));
    CHECK(fs::exists(dir / "curves_proportion.csv"));
    CHECK(fs::exists(dir / "test_table.csv"));
    CHECK(fs::exists(dir / "decomposition_replicates.csv"));

    StudyConfig bad = cfg;
    bad.n_list = {50, 20};
    CHECK_THROWS_AS(experiments::run_n_sweep(bad, ""), std::invalid_argument);
}

TEST_CASE("generator-route grid study uses the derived design by default") {
    StudyConfig cfg;
    cfg.study = "binomial-grid";
    cfg.n = 60;
    cfg.links = {"logit", "probit"};
    cfg.run_tests = false;
    cfg.seed = 9;
    const auto res = experiments::run_binomial_grid_study(cfg, "");
    CHECK(res.tree.leaf_count() == 2 * 8);  // 2 links x Table-3 sets
    CHECK(res.tree.levels[1].size() == 8);
    CHECK(res.tree.levels[1].back() == "none");
    CHECK(res.tree.levels[1][3] == "t+t2");
}

TEST_CASE("external stacking study") {
    const auto dir = fresh_dir("panova_ext");
    // synthetic 5-model setup with one dominant learner
    const int n = 40;
    Rng rng(31);
    std::vector<double> y(n);
    for (auto& v : y) v = rng.normal(0.0, 2.0);
    {
        std::ofstream f(dir / "data.csv");
        f << "y\n";
        for (double v : y) f << csvio::fmt(v) << "\n";
    }
    {
        std::ofstream f(dir / "oof.csv");
        f << "model,row,prediction\n";
        const std::vector<double> noise = {2.0, 1.5, 1.8, 2.2, 0.05};
        for (int m = 0; m < 5; ++m)
            for (int i = 0; i < n; ++i)
                f << "m" << m + 1 << "," << i << ","
                  << csvio::fmt(y[static_cast<std::size_t>(i)] + noise[static_cast<std::size_t>(m)] * rng.normal())
                  << "\n";
    }
    {
        std::ofstream f(dir / "heldout.csv");
        f << "model,mean,variance\n";
        f << "m1,1.0,237.33\nm2,0.5,260.46\nm3,-0.5,57.06\nm4,0.2,172.11\nm5,0.1,69.39\n";
    }
    StudyConfig cfg;
    cfg.study = "external-stacking";
    cfg.data_csv = (dir / "data.csv").string();
    cfg.oof_csv = (dir / "oof.csv").string();
    cfg.heldout_csv = (dir / "heldout.csv").string();
    cfg.response_column = "y";
    cfg.eval_draws = 5000;
    cfg.boot_B = 50;
    cfg.J = 1000;
    cfg.taus = {0.05, 0.06};
    cfg.seed = 4;
    const auto res = experiments::run_external_stacking_study(cfg, dir.string());
    REQUIRE(res.models.size() == 5);
    CHECK(res.weights[4] >= 0.5);  // the dominant learner
    CHECK(res.within + res.between == doctest::Approx(res.stack_variance).epsilon(1e-12));
    REQUIRE(res.asl.size() == 2);
    CHECK(res.asl[1] <= res.asl[0] + 1e-15);
    CHECK(fs::exists(dir / "stacking_table.csv"));
    CHECK(fs::exists(dir / "asl_sweep.csv"));

    // single external model: weight 1
    {
        std::ofstream f(dir / "oof1.csv");
        f << "model,row,prediction\n";
        for (int i = 0; i < n; ++i)
            f << "solo," << i << "," << csvio::fmt(y[static_cast<std::size_t>(i)]) << "\n";
        std::ofstream h(dir / "held1.csv");
        h << "model,mean,variance\nsolo,0.0,1.0\n";
    }
    StudyConfig cfg1 = cfg;
    cfg1.oof_csv = (dir / "oof1.csv").string();
    cfg1.heldout_csv = (dir / "held1.csv").string();
    cfg1.run_tests = false;
    const auto res1 = experiments::run_external_stacking_study(cfg1, "");
    REQUIRE(res1.models.size() == 1);
    CHECK(res1.weights[0] == 1.0);

    // mismatched rows are an error
    {
        std::ofstream f(dir / "oof_bad.csv");
        f << "model,row,prediction\nm1,0,1.0\nm1,1,2.0\n";
    }
    StudyConfig bad = cfg;
    bad.oof_csv = (dir / "oof_bad.csv").string();
    CHECK_THROWS_AS(experiments::run_external_stacking_study(bad, ""), std::invalid_argument);
}
