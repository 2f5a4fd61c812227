#include "panova/quadform.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "panova/mathutil.hpp"

namespace panova::quadform {

QuadraticFormDecomposition quadratic_forms(const core::FactorTree& t) {
    t.validate();
    const int K = t.depth();

    // Conditional means and path probabilities, independent of decompose_k so
    // the two routes can be compared against each other.
    std::vector<std::vector<double>> cond_mean(static_cast<std::size_t>(K) + 1);
    cond_mean[static_cast<std::size_t>(K)].resize(t.leaves.size());
    for (std::size_t i = 0; i < t.leaves.size(); ++i)
        cond_mean[static_cast<std::size_t>(K)][i] = t.leaves[i].mean;
    for (int k = K - 1; k >= 0; --k) {
        const auto mk = static_cast<std::size_t>(t.level_count(k));
        const auto& wk = t.weights[static_cast<std::size_t>(k)];
        const auto& child = cond_mean[static_cast<std::size_t>(k) + 1];
        auto& here = cond_mean[static_cast<std::size_t>(k)];
        here.resize(child.size() / mk);
        for (std::size_t parent = 0; parent < here.size(); ++parent) {
            KahanSum s;
            for (std::size_t j = 0; j < mk; ++j)
                s.add(wk[parent * mk + j] * child[parent * mk + j]);
            here[parent] = s.value();
        }
    }

    std::vector<std::vector<double>> path_prob(static_cast<std::size_t>(K) + 1);
    path_prob[0] = {1.0};
    for (int k = 0; k < K; ++k) {
        const auto mk = static_cast<std::size_t>(t.level_count(k));
        const auto& wk = t.weights[static_cast<std::size_t>(k)];
        const auto& pp = path_prob[static_cast<std::size_t>(k)];
        auto& next = path_prob[static_cast<std::size_t>(k) + 1];
        next.resize(pp.size() * mk);
        for (std::size_t parent = 0; parent < pp.size(); ++parent)
            for (std::size_t j = 0; j < mk; ++j)
                next[parent * mk + j] = pp[parent] * wk[parent * mk + j];
    }

    QuadraticFormDecomposition out;
    out.forms.resize(static_cast<std::size_t>(K));
    out.term_values.resize(static_cast<std::size_t>(K) + 1);

    for (int k = 0; k < K; ++k) {
        const auto mk = static_cast<std::size_t>(t.level_count(k));
        const auto& wk = t.weights[static_cast<std::size_t>(k)];
        const auto& pp = path_prob[static_cast<std::size_t>(k)];
        const auto& parent_mean = cond_mean[static_cast<std::size_t>(k)];
        const auto& child_mean = cond_mean[static_cast<std::size_t>(k) + 1];

        KahanSum term_sum;
        auto& forms_k = out.forms[static_cast<std::size_t>(k)];
        forms_k.reserve(pp.size());
        for (std::size_t parent = 0; parent < pp.size(); ++parent) {
            QuadraticFormTerm q;
            q.outer_weight = pp[parent];
            q.weights.resize(static_cast<Eigen::Index>(mk));
            q.w_sqrt.resize(static_cast<Eigen::Index>(mk));
            q.y_centered.resize(static_cast<Eigen::Index>(mk));
            q.y_scaled.resize(static_cast<Eigen::Index>(mk));
            KahanSum val;
            for (std::size_t j = 0; j < mk; ++j) {
                const double w = wk[parent * mk + j];
                const double d = child_mean[parent * mk + j] - parent_mean[parent];
                q.weights(static_cast<Eigen::Index>(j)) = w;
                q.w_sqrt(static_cast<Eigen::Index>(j)) = std::sqrt(w);
                q.y_centered(static_cast<Eigen::Index>(j)) = d;
                q.y_scaled(static_cast<Eigen::Index>(j)) = std::sqrt(w) * d;
                val.add(w * d * d);
            }
            q.A = q.w_sqrt * q.w_sqrt.transpose();
            q.value = val.value();
            term_sum.add(q.outer_weight * q.value);
            forms_k.push_back(std::move(q));
        }
        out.term_values[static_cast<std::size_t>(k)] = term_sum.value();
    }

    {
        KahanSum resid;
        const auto& pp = path_prob[static_cast<std::size_t>(K)];
        for (std::size_t i = 0; i < t.leaves.size(); ++i)
            resid.add(pp[i] * t.leaves[i].variance);
        out.residual = resid.value();
        out.term_values[static_cast<std::size_t>(K)] = out.residual;
    }

    KahanSum total;
    for (double v : out.term_values) total.add(v);
    out.total = total.value();
    return out;
}

BoxApprox box_gh(const std::vector<double>& lambda) {
    if (lambda.empty()) throw std::invalid_argument("degenerate form");
    KahanSum s1, s2;
    bool any_positive = false;
    for (double l : lambda) {
        if (!(l >= 0.0)) throw std::invalid_argument("eigenvalues must be >= 0");
        if (l > 0.0) any_positive = true;
        s1.add(l);
        s2.add(l * l);
    }
    if (!any_positive) throw std::invalid_argument("degenerate form");
    BoxApprox b;
    b.eigenvalues = lambda;
    b.g = s2.value() / s1.value();
    b.h = s1.value() * s1.value() / s2.value();
    return b;
}

std::vector<double> term_eigenvalues(const QuadraticFormTerm& q, const Eigen::MatrixXd& sigma) {
    const Eigen::Index dim = q.A.rows();
    if (sigma.rows() != dim || sigma.cols() != dim)
        throw std::invalid_argument("covariance not conformable with quadratic form");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument("covariance must be symmetric");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    Eigen::VectorXd d = es.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d(i) < -1e-10 * scale) throw std::invalid_argument("covariance is not PSD");
        d(i) = std::max(0.0, d(i));
    }
    const Eigen::MatrixXd sqrt_sigma =
        es.eigenvectors() * d.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();

    const Eigen::MatrixXd sym = sqrt_sigma * q.A * sqrt_sigma;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(sym);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i) {
        double l = es2.eigenvalues()(i);
        if (l < -1e-10) throw std::runtime_error("negative eigenvalue in PSD quadratic form");
        out.push_back(std::max(0.0, l));
    }
    std::sort(out.begin(), out.end(), std::greater<double>());
    return out;
}

}  // namespace panova::quadform
