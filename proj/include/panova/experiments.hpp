#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panova/average.hpp"
#include "panova/core.hpp"
#include "panova/fit.hpp"
#include "panova/vartest.hpp"

namespace panova::experiments {

// Scenario description shared by every study; unused fields are ignored by
// studies that do not need them.  Parsed from JSON (see from_json_text).
struct StudyConfig {
    std::string study = "shrinkage";  // shrinkage | binomial-grid | n-sweep | external-stacking
    std::string name = "study";

    // Sparse-gaussian generator.
    int n = 50;
    int p = 100;
    int n_signal = 5;
    double beta_mean = 5.0;
    double beta_sd = 1.5;
    double noise_sd = 1.0;

    // Binomial generator and model grid.
    int trials = 30;
    std::vector<double> glm_beta = {0.75, 0.25, -0.3, 0.5, 0, 0, 0, 0, 0, 0};
    int grid_covariates = 4;
    std::vector<std::string> links = {"logit", "cloglog", "probit"};
    std::string response_scale = "probability";  // probability | count
    // Generator-route grids: "challenger" derives (t, t^2, s) from the first
    // two covariates and uses the classic 8 variable sets; "subsets" takes
    // every subset of the first grid_covariates covariates.
    std::string grid_structure = "challenger";
    double x_new_scale = 2.5;  // extrapolative prediction point, like t=31

    // Pipeline parameters.
    std::vector<std::string> methods = {"lasso", "ridge", "alasso", "enet", "aenet"};
    double enet_alpha = 0.5;
    int folds = 5;
    int replicates = 100;
    int eval_draws = 100000;
    int boot_B = 200;   // outer bootstrap replicates (ratio samples)
    int inner_B = 50;   // prediction-variance bootstrap
    int J = 10000;
    std::vector<double> taus = {0.01, 0.05, 0.1};
    double alpha = 0.05;
    double delta = 0.02;
    bool run_tests = true;
    std::vector<int> n_list = {20, 50, 100};

    std::uint64_t seed = 1;
    int threads = 0;  // 0 = default_threads()

    // External inputs (data-route studies).
    std::string data_csv;
    std::string oof_csv;
    std::string heldout_csv;
    std::string response_column = "y";
    std::string trials_column;
    std::vector<std::string> covariates;     // grid variables for the data route
    std::optional<std::vector<double>> x_new;  // prediction point (data route)

    static StudyConfig from_json_text(const std::string& text);
    static StudyConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

// --------------------------------------------------------------------------
// Generators
// --------------------------------------------------------------------------

struct GeneratedLinear {
    fit::Dataset data;        // n-1 fit rows
    Eigen::VectorXd beta;     // true coefficients
    Eigen::VectorXd x_new;    // held-out prediction point
};
GeneratedLinear generate_sparse_gaussian(const StudyConfig& cfg, std::uint64_t seed);

struct GeneratedBinomial {
    fit::Dataset data;
    Eigen::VectorXd x_new;
    double p_new = 0.0;  // true success probability at x_new
};
GeneratedBinomial generate_binomial(const StudyConfig& cfg, int n, std::uint64_t seed);

// --------------------------------------------------------------------------
// Pipelines (dataset -> FactorTree), reusable by the bootstrap test layer
// --------------------------------------------------------------------------

core::FactorTree shrinkage_tree(const fit::Dataset& d, const Eigen::VectorXd& x_new,
                                const std::vector<std::string>& method_names,
                                const std::vector<fit::PenaltySpec>& resolved_specs, int folds,
                                int inner_B, std::uint64_t seed);

std::vector<std::vector<int>> default_variable_sets(int n_covariates);
std::string variable_set_label(const std::vector<int>& set,
                               const std::vector<std::string>& names);

// Derived design following the O-ring template: features (t, t^2, s) built
// from the generator's first two covariates, the familiar 8 variable sets,
// and a scaled (extrapolative) prediction point.
struct DerivedGrid {
    fit::Dataset data;
    Eigen::VectorXd x_new;
    std::vector<std::vector<int>> variable_sets;
};
DerivedGrid challenger_structure(const GeneratedBinomial& gen, double x_new_scale);

core::FactorTree binomial_grid_tree(const fit::Dataset& d, const Eigen::VectorXd& x_new,
                                    const std::vector<fit::Link>& links,
                                    const std::vector<std::vector<int>>& variable_sets,
                                    const std::string& scale, int new_trials,
                                    int* fallback_count = nullptr);

// --------------------------------------------------------------------------
// Studies.  out_dir may be empty to skip file output.
// --------------------------------------------------------------------------

struct ShrinkageReplicate {
    std::vector<double> stacking_weights;  // per method
    std::vector<double> pred_variance;     // per method
    std::vector<double> coverage;          // per method
    double stack_variance = 0.0;
    double stack_coverage = 0.0;
    double within = 0.0;
    double between = 0.0;
    double ratio = 0.0;
    double z_bar = 0.0;
    std::vector<double> asl;  // per tau; empty when run_tests is off
};

struct ShrinkageResult {
    std::vector<std::string> methods;
    std::vector<double> taus;
    std::vector<ShrinkageReplicate> replicates;
};

ShrinkageResult run_shrinkage_study(const StudyConfig& cfg, const std::string& out_dir);

struct GridStudyResult {
    core::FactorTree tree;
    core::DecompositionReport report;
    std::optional<vartest::TermTestTable> tests;
    int fallback_count = 0;
};

GridStudyResult run_binomial_grid_study(const StudyConfig& cfg, const std::string& out_dir);
GridStudyResult run_binomial_grid_study_on(const fit::Dataset& d, const StudyConfig& cfg,
                                           const std::string& out_dir);

struct SweepRow {
    int n = 0;
    // decomposition order: links, models, predictions (K=2)
    std::vector<double> median_terms;
    std::vector<double> median_props;
    double median_total = 0.0;
    std::vector<std::vector<double>> prop_replicates;  // [term][replicate]
    std::vector<double> z_bar;               // from the tested replicate
    std::vector<std::vector<double>> asl;    // [term][tau]
};

struct SweepResult {
    std::vector<double> taus;
    std::vector<SweepRow> rows;
};

SweepResult run_n_sweep(const StudyConfig& cfg, const std::string& out_dir);

struct ExternalStackingResult {
    std::vector<std::string> models;
    std::vector<double> weights;
    std::vector<double> variances;
    std::vector<double> coverages;
    double stack_variance = 0.0;
    double stack_coverage = 0.0;
    double within = 0.0;
    double between = 0.0;
    double ratio = 0.0;
    std::vector<double> taus;
    std::vector<double> asl;
};

ExternalStackingResult run_external_stacking_study(const StudyConfig& cfg,
                                                   const std::string& out_dir);

// Dispatch by cfg.study; writes the run manifest.  Unknown study names throw
// std::invalid_argument listing the available ones.
void run_study(const StudyConfig& cfg, const std::string& out_dir);

}  // namespace panova::experiments
