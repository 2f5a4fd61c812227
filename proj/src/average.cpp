#include "panova/average.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "panova/mathutil.hpp"
#include "panova/rng.hpp"

namespace panova::average {

std::string weight_method_name(WeightMethod m) {
    switch (m) {
        case WeightMethod::stacking: return "stacking";
        case WeightMethod::bic_posterior: return "bic-posterior";
        case WeightMethod::uniform: return "uniform";
        case WeightMethod::fixed: return "fixed";
    }
    return "?";
}

void WeightVector::validate() const {
    if (weights.empty()) throw std::invalid_argument("empty weight vector");
    KahanSum s;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("weights must be >= 0");
        s.add(w);
    }
    if (std::abs(s.value() - 1.0) > 1e-10)
        throw std::invalid_argument("weights must sum to 1");
}

std::string WeightVector::to_json() const {
    nlohmann::json j;
    j["method"] = weight_method_name(method);
    j["weights"] = weights;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Simplex projection (Duchi et al. style, sort-based)
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
    const int q = static_cast<int>(v.size());
    std::vector<double> u(v.data(), v.data() + q);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0;
    double theta = 0.0;
    for (int i = 0; i < q; ++i) {
        css += u[static_cast<std::size_t>(i)];
        const double t = (css - 1.0) / (i + 1);
        if (u[static_cast<std::size_t>(i)] - t > 0.0) theta = t;
    }
    Eigen::VectorXd w(q);
    for (int i = 0; i < q; ++i) w(i) = std::max(0.0, v(i) - theta);
    return w;
}

// Complementarity residual for min f over the simplex: active coordinates
// must share the minimal gradient value, inactive ones must not beat it.
double kkt_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& grad) {
    const double mu = grad.minCoeff();
    double res = 0.0;
    for (int j = 0; j < w.size(); ++j) res = std::max(res, w(j) * (grad(j) - mu));
    return res;
}

}  // namespace

WeightVector stacking_weights(const Eigen::MatrixXd& cv_preds, const Eigen::VectorXd& y) {
    const int q = static_cast<int>(cv_preds.cols());
    if (q == 0) throw std::invalid_argument("stacking needs at least one model");
    if (cv_preds.rows() != y.size())
        throw std::invalid_argument("cv prediction rows must match response length");
    if (!cv_preds.allFinite() || !y.allFinite())
        throw std::invalid_argument("stacking inputs must be finite");

    WeightVector out;
    out.method = WeightMethod::stacking;
    if (q == 1) {
        out.weights = {1.0};
        return out;
    }

    // Normalize scale so tolerances (and hence the returned weights) are
    // equivariant under y -> c y, P -> c P.
    const double scale = std::max({1e-300, y.norm(), cv_preds.norm()});
    const Eigen::MatrixXd P = cv_preds / scale;
    const Eigen::VectorXd ys = y / scale;
    const Eigen::MatrixXd G = P.transpose() * P;   // gradient = 2(Gw - c)
    const Eigen::VectorXd c = P.transpose() * ys;

    Eigen::VectorXd w = Eigen::VectorXd::Constant(q, 1.0 / q);
    auto objective = [&](const Eigen::VectorXd& v) { return (ys - P * v).squaredNorm(); };

    double step = 1.0;
    {
        // Lipschitz estimate via a few power iterations on G.
        Eigen::VectorXd v = Eigen::VectorXd::Ones(q).normalized();
        for (int i = 0; i < 50; ++i) {
            v = G * v;
            const double nv = v.norm();
            if (nv <= 0.0) break;
            v /= nv;
        }
        const double lip = 2.0 * std::max(v.dot(G * v), 1e-12);
        step = 1.0 / lip;
    }

    double fw = objective(w);
    const int max_iter = 100000;
    for (int iter = 0; iter < max_iter; ++iter) {
        const Eigen::VectorXd grad = 2.0 * (G * w - c);
        if (kkt_residual(w, grad) <= 1e-10) break;
        double t = step;
        Eigen::VectorXd next;
        double fn = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            next = project_simplex(w - t * grad);
            fn = objective(next);
            const Eigen::VectorXd diff = next - w;
            if (fn <= fw + grad.dot(diff) + 0.5 / t * diff.squaredNorm() + 1e-18) break;
            t *= 0.5;
        }
        if ((next - w).lpNorm<Eigen::Infinity>() <= 1e-16) break;
        w = next;
        fw = fn;
    }

    // Active-set polish: minimum-norm KKT solve restricted to the support
    // found by projected gradient.  Rejected if it leaves the simplex or
    // breaks inactive-coordinate optimality.
    {
        std::vector<int> active;
        for (int j = 0; j < q; ++j)
            if (w(j) > 1e-12) active.push_back(j);
        const int a = static_cast<int>(active.size());
        if (a >= 1) {
            Eigen::MatrixXd kkt(a + 1, a + 1);
            kkt.setZero();
            for (int r = 0; r < a; ++r)
                for (int s = 0; s < a; ++s) kkt(r, s) = 2.0 * G(active[static_cast<std::size_t>(r)], active[static_cast<std::size_t>(s)]);
            kkt.block(0, a, a, 1).setOnes();
            kkt.block(a, 0, 1, a).setOnes();
            Eigen::VectorXd rhs(a + 1);
            for (int r = 0; r < a; ++r) rhs(r) = 2.0 * c(active[static_cast<std::size_t>(r)]);
            rhs(a) = 1.0;
            const Eigen::VectorXd sol =
                kkt.completeOrthogonalDecomposition().solve(rhs);
            Eigen::VectorXd cand = Eigen::VectorXd::Zero(q);
            for (int r = 0; r < a; ++r) cand(active[static_cast<std::size_t>(r)]) = sol(r);
            const bool feasible = (cand.array() >= -1e-12).all();
            if (feasible) {
                for (int j = 0; j < q; ++j) cand(j) = std::max(0.0, cand(j));
                cand /= cand.sum();
                const Eigen::VectorXd grad = 2.0 * (G * cand - c);
                if (objective(cand) <= fw + 1e-15 && kkt_residual(cand, grad) <= 1e-8)
                    w = cand;
            }
        }
    }

    w /= w.sum();
    out.weights.assign(w.data(), w.data() + q);
    out.validate();
    return out;
}

Eigen::MatrixXd cv_predictions(const fit::Dataset& d, const std::vector<ModelFitter>& fitters,
                               int folds, std::uint64_t seed) {
    d.validate();
    const int n = d.n();
    const int q = static_cast<int>(fitters.size());
    if (q == 0) throw std::invalid_argument("cv_predictions needs at least one model");
    if (folds < 2 || folds > n) throw std::invalid_argument("cv folds must be in [2, n]");

    Rng rng(seed);
    const auto perm = rng.permutation(n);
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % folds;

    Eigen::MatrixXd preds(n, q);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_idx, test_idx;
        for (int i = 0; i < n; ++i)
            (fold[static_cast<std::size_t>(i)] == f ? test_idx : train_idx).push_back(i);
        if (test_idx.empty()) continue;
        const fit::Dataset train = d.rows(train_idx);
        for (int j = 0; j < q; ++j) {
            fit::FittedModel m;
            try {
                m = fitters[static_cast<std::size_t>(j)](train);
            } catch (const std::exception& e) {
                throw std::runtime_error("cv fold " + std::to_string(f) + " model " +
                                         std::to_string(j) + " failed: " + e.what());
            }
            for (int i : test_idx) preds(i, j) = m.predict(d.X.row(i).transpose());
        }
    }
    return preds;
}

WeightVector bic_weights(const std::vector<double>& log_likelihoods,
                         const std::vector<int>& param_counts, int n) {
    if (log_likelihoods.empty() || log_likelihoods.size() != param_counts.size())
        throw std::invalid_argument("bic_weights needs matching nonempty inputs");
    const std::size_t q = log_likelihoods.size();
    std::vector<double> bic(q);
    for (std::size_t i = 0; i < q; ++i) {
        if (!std::isfinite(log_likelihoods[i]))
            throw std::invalid_argument("bic_weights needs finite log-likelihoods");
        bic[i] = -2.0 * log_likelihoods[i] + param_counts[i] * std::log(static_cast<double>(n));
    }
    const double bmin = *std::min_element(bic.begin(), bic.end());
    std::vector<double> w(q);
    KahanSum total;
    for (std::size_t i = 0; i < q; ++i) {
        w[i] = std::exp(-0.5 * (bic[i] - bmin));
        total.add(w[i]);
    }
    for (auto& wi : w) wi /= total.value();
    WeightVector out;
    out.weights = std::move(w);
    out.method = WeightMethod::bic_posterior;
    out.validate();
    return out;
}

std::vector<double> variable_set_importance(const Eigen::MatrixXd& joint_weights) {
    KahanSum total;
    for (int i = 0; i < joint_weights.rows(); ++i)
        for (int j = 0; j < joint_weights.cols(); ++j) {
            if (!(joint_weights(i, j) >= 0.0))
                throw std::invalid_argument("joint weights must be >= 0");
            total.add(joint_weights(i, j));
        }
    if (std::abs(total.value() - 1.0) > 1e-10)
        throw std::invalid_argument("joint weights must sum to 1");
    std::vector<double> out(static_cast<std::size_t>(joint_weights.cols()));
    for (int j = 0; j < joint_weights.cols(); ++j) {
        KahanSum s;
        for (int i = 0; i < joint_weights.rows(); ++i) s.add(joint_weights(i, j));
        out[static_cast<std::size_t>(j)] = s.value();
    }
    return out;
}

}  // namespace panova::average
