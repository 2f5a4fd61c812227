#pragma once

#include <Eigen/Dense>
#include <vector>

#include "panova/core.hpp"

namespace panova::quadform {

// One between-type contribution at a single path prefix.  The rank-1 matrix
// A = W W' (trace = sum of the conditional weights = 1) drives the
// distributional layer; the term's value is the weighted centered norm
// ||y_scaled||^2 = sum_j w_j (yhat_j - ybar)^2, which is what the
// decomposition term actually sums.
struct QuadraticFormTerm {
    Eigen::VectorXd weights;     // conditional child weights at this node
    Eigen::VectorXd w_sqrt;      // W
    Eigen::MatrixXd A;           // W W'
    Eigen::VectorXd y_centered;  // child conditional means minus node mean
    Eigen::VectorXd y_scaled;    // sqrt(w_j) * y_centered_j
    double outer_weight = 1.0;   // path probability of the prefix
    double value = 0.0;          // y_scaled . y_scaled
};

struct QuadraticFormDecomposition {
    // forms[k] holds the prefix forms of decomposition term k (k = 0..K-1).
    std::vector<std::vector<QuadraticFormTerm>> forms;
    // Outer-weighted sums per term; matches decompose_k termwise.
    std::vector<double> term_values;
    // Expectation (residual) term: E over full paths of Var(Y | path).
    double residual = 0.0;
    double total = 0.0;
};

QuadraticFormDecomposition quadratic_forms(const core::FactorTree& t);

struct BoxApprox {
    double g = 0.0;
    double h = 0.0;
    std::vector<double> eigenvalues;
};

// Two-moment g*chi^2(h) fit to sum_j lambda_j chi^2_1:
// g = sum(l^2)/sum(l), h = sum(l)^2/sum(l^2).
BoxApprox box_gh(const std::vector<double>& lambda);

// Eigenvalues of A Sigma via the symmetric problem Sigma^{1/2} A Sigma^{1/2}.
// A is rank <= 1 so at most one eigenvalue is nonzero (= W' Sigma W).
std::vector<double> term_eigenvalues(const QuadraticFormTerm& q, const Eigen::MatrixXd& sigma);

}  // namespace panova::quadform
