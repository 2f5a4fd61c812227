#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panova/core.hpp"

namespace panova::fit {

struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::optional<Eigen::VectorXi> trials;  // binomial responses only
    std::vector<std::string> feature_names;
    std::string response_name = "y";

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
    bool is_binomial() const { return trials.has_value(); }

    void validate() const;
    Dataset rows(const std::vector<int>& idx) const;
};

// CSV with a header row; every non-response (non-trials) column is a feature.
// Missing or non-numeric cells are rejected.
Dataset dataset_from_csv(const std::string& path, const std::string& response,
                         const std::optional<std::string>& trials_column = std::nullopt);

enum class Penalty { ols, ridge, lasso, alasso, enet, aenet };
std::string penalty_name(Penalty k);
Penalty penalty_from_name(const std::string& name);

struct PenaltySpec {
    Penalty kind = Penalty::ols;
    double lambda = 0.0;
    double alpha = 0.5;  // elastic-net mixing (enet/aenet)
    std::optional<Eigen::VectorXd> adaptive_weights;  // alasso/aenet; defaults to 1/|beta_ridge|
};

enum class Link { logit, cloglog, probit };
std::string link_name(Link l);
Link link_from_name(const std::string& name);

struct FittedModel {
    Eigen::VectorXd beta;  // length p+1, intercept first, original scale
    std::vector<int> support;
    double sigma2_hat = 0.0;
    PenaltySpec spec;

    // GLM fits only.
    std::optional<Link> link;
    std::vector<int> glm_variables;
    Eigen::MatrixXd beta_cov;   // (M'WM + ridge I)^-1 over [1, X_vars]
    double log_likelihood = 0.0;
    int n_params = 0;
    bool ridge_fallback = false;

    double linear_predictor(const Eigen::VectorXd& x) const;
    // Mean response: x'beta for linear fits, invlink(eta) for GLM fits.
    double predict(const Eigen::VectorXd& x) const;
    // N(predict(x), sigma2_hat + var_of_fit); var_of_fit typically comes
    // from bootstrap_pred_variance.
    core::ComponentPredictive predictive(const Eigen::VectorXd& x, double var_of_fit = 0.0) const;
};

// Cyclic coordinate descent on the standardized elastic-net objective
//   (1/2)||y - Xb||^2 + lambda (a * sum w_j |b_j| + (1-a)/2 ||b||^2),
// columns centered and scaled to unit norm, coefficients mapped back to the
// original scale.  Ridge and OLS use direct solves.
FittedModel fit_penalized(const Dataset& d, const PenaltySpec& spec);

// Test hook: per-sweep penalized objective values from the coordinate-descent
// path (left empty by the ols/ridge direct solves).
FittedModel fit_penalized_traced(const Dataset& d, const PenaltySpec& spec,
                                 std::vector<double>* sweep_objectives);

// 5-fold cross-validation over a 100-point log-spaced lambda grid,
// minimum-CV rule (no one-standard-error rule).  max_support > 0 restricts
// the search to lambdas whose full-data support stays below the cap, so a
// later OLS-on-support refit keeps positive degrees of freedom.
double cv_select_lambda(const Dataset& d, PenaltySpec spec, int folds, std::uint64_t seed,
                        int max_support = 0);

Eigen::VectorXd default_adaptive_weights(const Dataset& d, int folds, std::uint64_t seed);

// Fills in lambda (by CV) and adaptive weights so repeated refits are cheap.
PenaltySpec resolve_spec(const Dataset& d, PenaltySpec spec, int folds, std::uint64_t seed,
                         int max_support = 0);

// OLS residual variance from a refit on the selected variables,
// RSS / (n - |support| - 1).  Ridge borrows the elastic-net support.
double estimate_sigma2(const Dataset& d, const FittedModel& m);

// Case-resampled variance of predict(x_new) across B refits.  Degenerate
// resamples are redrawn (at most 10 times each).
double bootstrap_pred_variance(const Dataset& d, const PenaltySpec& spec,
                               const Eigen::VectorXd& x_new, int B, std::uint64_t seed);

struct GlmOptions {
    double tol = 1e-8;
    int max_iter = 100;
    double ridge = 0.0;
};

FittedModel fit_glm_binomial(const Dataset& d, Link link, const std::vector<int>& variables,
                             const GlmOptions& opt = {});

// Like fit_glm_binomial, but separation/divergence falls back to a
// ridge-penalized refit (lambda = 1e-4) flagged via ridge_fallback.
FittedModel fit_glm_binomial_robust(const Dataset& d, Link link,
                                    const std::vector<int>& variables);

// Delta-method variance of the fitted success probability at x.
double glm_prob_variance(const FittedModel& m, const Eigen::VectorXd& x);

struct GridModelSpec {
    Link link;
    std::vector<int> variables;
};

// Cartesian product, links outer, variable sets inner (row-major).
std::vector<GridModelSpec> model_grid(const std::vector<Link>& links,
                                      const std::vector<std::vector<int>>& variable_sets);

}  // namespace panova::fit
