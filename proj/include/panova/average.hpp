#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "panova/fit.hpp"

namespace panova::average {

enum class WeightMethod { stacking, bic_posterior, uniform, fixed };
std::string weight_method_name(WeightMethod m);

struct WeightVector {
    std::vector<double> weights;  // simplex: sum 1 within 1e-10, each >= 0
    WeightMethod method = WeightMethod::fixed;

    void validate() const;
    std::string to_json() const;
};

// min ||y - P w||^2 over the probability simplex.  Projected gradient with
// backtracking from the uniform start (the documented tie-break), followed by
// an active-set polish; KKT complementarity residual <= 1e-8.
WeightVector stacking_weights(const Eigen::MatrixXd& cv_preds, const Eigen::VectorXd& y);

using ModelFitter = std::function<fit::FittedModel(const fit::Dataset&)>;

// Entry (i, j): model j's prediction for case i from the fit that excluded
// case i's fold.  Fold assignment is deterministic given the seed.
Eigen::MatrixXd cv_predictions(const fit::Dataset& d, const std::vector<ModelFitter>& fitters,
                               int folds, std::uint64_t seed);

// w_i proportional to exp(-BIC_i / 2), BIC_i = -2 l_i + k_i log n, max-shifted.
WeightVector bic_weights(const std::vector<double>& log_likelihoods,
                         const std::vector<int>& param_counts, int n);

// Marginal over variable sets of a joint (model x variable-set) simplex.
std::vector<double> variable_set_importance(const Eigen::MatrixXd& joint_weights);

}  // namespace panova::average
