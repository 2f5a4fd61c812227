// panova: decompose predictive variance over modeling choices, test term
// contributions with a two-layer bootstrap, and build/choose prediction
// intervals.  Exit codes: 0 success, 1 runtime/numerical failure, 2 usage or
// config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "panova/core.hpp"
#include "panova/average.hpp"
#include "panova/csvio.hpp"
#include "panova/experiments.hpp"
#include "panova/intervals.hpp"
#include "panova/parallel.hpp"
#include "panova/vartest.hpp"

namespace {

namespace fs = std::filesystem;
using panova::csvio::fmt;
using panova::csvio::fmt_rounded;

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
}

std::vector<double> read_z_file(const std::string& path) {
    // Either a one-column CSV with header, or a headerless list of numbers.
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open z-file: " + path);
    std::vector<double> z;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str()) {
            if (line_no == 1) continue;  // header
            throw std::invalid_argument("z-file line " + std::to_string(line_no) +
                                        ": not a number: '" + line + "'");
        }
        z.push_back(v);
    }
    if (z.empty()) throw std::invalid_argument("z-file has no samples: " + path);
    return z;
}

int cmd_decompose(const std::string& tree_file, const std::string& config_path,
                  const std::string& out_dir) {
    panova::core::FactorTree tree;
    if (!tree_file.empty()) {
        tree = panova::core::load_tree(tree_file);
    } else {
        // data + model-spec route: fit the configured GLM grid, then decompose.
        auto cfg = panova::experiments::StudyConfig::from_json_file(config_path);
        cfg.run_tests = false;
        tree = panova::experiments::run_binomial_grid_study(cfg, "").tree;
    }
    const auto report = panova::core::decompose_k(tree);

    for (std::size_t i = 0; i < report.terms.size(); ++i)
        std::cout << report.sources[i] << ": variance " << fmt(report.terms[i]) << "  proportion "
                  << fmt_rounded(report.proportions[i], 4) << "\n";
    std::cout << "Total: " << fmt(report.total) << "\n";

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file(fs::path(out_dir) / "decomposition.csv", panova::core::report_to_csv(report));
        write_file(fs::path(out_dir) / "decomposition.json",
                   panova::core::report_to_json(report) + "\n");
        std::cout << "wrote " << (fs::path(out_dir) / "decomposition.csv").string() << "\n";
    }
    return 0;
}

int cmd_test(const std::string& z_file, const std::string& config_path,
             const std::vector<double>& taus, int J, int B, std::uint64_t seed, double threshold,
             const std::string& out_dir) {
    std::vector<double> z;
    if (!z_file.empty()) {
        z = read_z_file(z_file);
    } else {
        // pipeline route: bootstrap the configured grid pipeline's first
        // between-term ratio on the configured (or generated) dataset.
        auto cfg = panova::experiments::StudyConfig::from_json_file(config_path);
        cfg.seed = seed;
        if (B > 0) cfg.boot_B = B;
        cfg.run_tests = true;
        cfg.taus = taus;
        cfg.J = J;
        const auto res = panova::experiments::run_binomial_grid_study(cfg, "");
        for (std::size_t k = 0; k < res.tests->z.size(); ++k)
            std::cout << "term " << k << " z_bar=" << fmt_rounded(res.tests->z_bar[k], 4)
                      << "\n";
        z = res.tests->z.front();
    }
    panova::csvio::Table sweep;
    sweep.columns = {"tau", "z_bar", "t_stat", "asl", "decision"};
    std::string last_json;
    for (double tau : taus) {
        const auto outcome = panova::vartest::asl_test(z, tau, J, seed);
        const bool reject = outcome.asl < threshold;
        std::cout << "tau=" << fmt_rounded(tau, 4) << "  z_bar=" << fmt_rounded(outcome.z_bar, 4)
                  << "  ASL=" << fmt_rounded(outcome.asl, 4) << "  -> "
                  << (reject ? "reject H0" : "retain H0") << "\n";
        sweep.add_row({fmt(tau), fmt(outcome.z_bar), fmt(outcome.t_stat), fmt(outcome.asl),
                       reject ? "reject" : "retain"});
        last_json = outcome.to_json();
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        sweep.save((fs::path(out_dir) / "asl_sweep.csv").string());
        write_file(fs::path(out_dir) / "test_outcome.json", last_json + "\n");
    }
    return 0;
}

int cmd_stack(const std::string& preds_csv, const std::string& y_column,
              const std::string& out_dir) {
    const auto table = panova::csvio::load(preds_csv);
    const auto y = panova::csvio::numeric_column(table, y_column);
    std::vector<std::string> model_cols;
    for (const auto& col : table.columns)
        if (col != y_column) model_cols.push_back(col);
    if (model_cols.empty()) throw std::invalid_argument("no prediction columns in " + preds_csv);

    Eigen::MatrixXd P(static_cast<Eigen::Index>(y.size()),
                      static_cast<Eigen::Index>(model_cols.size()));
    for (std::size_t j = 0; j < model_cols.size(); ++j) {
        const auto col = panova::csvio::numeric_column(table, model_cols[j]);
        for (std::size_t i = 0; i < col.size(); ++i)
            P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    const auto wv = panova::average::stacking_weights(
        P, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
    for (std::size_t j = 0; j < model_cols.size(); ++j)
        std::cout << model_cols[j] << ": " << fmt_rounded(wv.weights[j], 4) << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file(fs::path(out_dir) / "stacking_weights.json", wv.to_json() + "\n");
    }
    return 0;
}

int cmd_select(const std::vector<std::string>& tree_files, double alpha, double delta, int g,
               std::uint64_t seed, const std::string& out_dir) {
    std::vector<panova::core::FactorTree> candidates;
    candidates.reserve(tree_files.size());
    for (const auto& f : tree_files) candidates.push_back(panova::core::load_tree(f));
    const auto res = panova::intervals::select_model_list(candidates, alpha, delta, g, seed);
    std::cout << "chosen: " << tree_files[static_cast<std::size_t>(res.chosen_index)]
              << (res.within_band ? "" : "  (no candidate within delta; closest coverage)")
              << "\n";
    for (std::size_t i = 0; i < res.candidates.size(); ++i)
        std::cout << "  [" << i << "] coverage=" << fmt_rounded(res.candidates[i].coverage, 4)
                  << " variance=" << fmt_rounded(res.candidates[i].variance, 4)
                  << (res.candidates[i].in_band ? " in-band" : "") << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file(fs::path(out_dir) / "selection.csv", panova::intervals::selection_to_csv(res));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"predictive-variance decomposition, term tests, and interval selection"};
    app.require_subcommand(1);

    std::string tree_file, z_file, preds_csv, y_column = "y", config_path, out_dir;
    std::vector<std::string> tree_files;
    std::vector<double> taus{0.05};
    int J = 10000, B = 200, g = 2000, threads = 0;
    std::uint64_t seed = 1;
    double threshold = panova::vartest::kDefaultAslThreshold;
    double alpha = 0.05, delta = 0.02;

    auto* dec = app.add_subcommand("decompose", "variance decomposition of a factor tree");
    dec->add_option("--tree", tree_file, "FactorTree JSON file");
    dec->add_option("--config", config_path, "study config (fit a GLM grid from data instead)");
    dec->add_option("--out", out_dir, "output directory");

    auto* tst = app.add_subcommand("test", "two-layer bootstrap test on ratio samples");
    tst->add_option("--z-file", z_file, "CSV/list of bootstrap ratio samples");
    tst->add_option("--config", config_path, "study config (bootstrap a pipeline instead)");
    tst->add_option("--tau", taus, "threshold(s) for H0: E[term/total] >= tau");
    tst->add_option("--J", J, "inner resamples");
    tst->add_option("--B", B, "outer bootstrap size (pipeline route)");
    tst->add_option("--seed", seed, "RNG seed")->required();
    tst->add_option("--threshold", threshold, "ASL rejection threshold");
    tst->add_option("--out", out_dir, "output directory");

    auto* stk = app.add_subcommand("stack", "stacking weights from out-of-fold predictions");
    stk->add_option("--preds", preds_csv, "CSV with response column + one column per model")
        ->required();
    stk->add_option("--y-col", y_column, "response column name");
    stk->add_option("--out", out_dir, "output directory");

    auto* stu = app.add_subcommand("study", "run a configured study end to end");
    stu->add_option("--config", config_path, "study config JSON")->required();
    stu->add_option("--out", out_dir, "output directory")->required();
    stu->add_option("--seed", seed, "override config seed");
    stu->add_option("--threads", threads, "worker cap (PANOVA_THREADS is the fallback)");
    stu->add_option("--B", B, "override outer bootstrap size");
    stu->add_option("--J", J, "override inner resamples");
    stu->add_option("--tau", taus, "override tau list");
    stu->add_option("--alpha", alpha, "override interval level");
    stu->add_option("--delta", delta, "override coverage band half-width");

    auto* sel = app.add_subcommand("select", "pick the model list with smallest variance "
                                             "among near-nominal-coverage candidates");
    sel->add_option("--trees", tree_files, "candidate FactorTree JSON files")->required();
    sel->add_option("--alpha", alpha, "interval level");
    sel->add_option("--delta", delta, "coverage band half-width");
    sel->add_option("--g", g, "coverage draws per candidate");
    sel->add_option("--seed", seed, "RNG seed")->required();
    sel->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (dec->parsed()) {
            if (tree_file.empty() == config_path.empty()) {
                std::cerr << "error: decompose needs exactly one of --tree or --config\n";
                return 2;
            }
            return cmd_decompose(tree_file, config_path, out_dir);
        }
        if (tst->parsed()) {
            if (z_file.empty() == config_path.empty()) {
                std::cerr << "error: test needs exactly one of --z-file or --config\n";
                return 2;
            }
            return cmd_test(z_file, config_path, taus, J, B, seed, threshold, out_dir);
        }
        if (stk->parsed()) return cmd_stack(preds_csv, y_column, out_dir);
        if (sel->parsed()) return cmd_select(tree_files, alpha, delta, g, seed, out_dir);
        if (stu->parsed()) {
            auto cfg = panova::experiments::StudyConfig::from_json_file(config_path);
            for (const auto* opt_name :
                 {"--seed", "--threads", "--B", "--J", "--tau", "--alpha", "--delta"}) {
                if (stu->count(opt_name) == 0) continue;
                if (std::string(opt_name) == "--seed") cfg.seed = seed;
                if (std::string(opt_name) == "--threads") cfg.threads = threads;
                if (std::string(opt_name) == "--B") cfg.boot_B = B;
                if (std::string(opt_name) == "--J") cfg.J = J;
                if (std::string(opt_name) == "--tau") cfg.taus = taus;
                if (std::string(opt_name) == "--alpha") cfg.alpha = alpha;
                if (std::string(opt_name) == "--delta") cfg.delta = delta;
            }
            panova::experiments::run_study(cfg, out_dir);
            std::cout << "study '" << cfg.study << "' complete; outputs in " << out_dir << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
