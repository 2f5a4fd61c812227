#include "panova/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "panova/csvio.hpp"
#include "panova/mathutil.hpp"
#include "panova/rng.hpp"

namespace panova::fit {

namespace {

constexpr std::uint64_t kSigmaEnetSeed = 0x51D0A;   // ridge -> EN support refits
constexpr std::uint64_t kAdaptiveSeed = 0xADA01;    // default adaptive weights

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

void Dataset::validate() const {
    require(n() >= 2, "dataset needs n >= 2");
    require(y.size() == X.rows(), "dataset X/y row mismatch");
    if (!X.allFinite() || !y.allFinite())
        throw std::invalid_argument("dataset contains NaN or Inf");
    if (trials) {
        require(trials->size() == y.size(), "trials column length mismatch");
        for (int i = 0; i < n(); ++i) {
            const int t = (*trials)(i);
            require(t >= 1, "trials must be positive");
            const double yi = y(i);
            require(yi >= 0.0 && yi <= t, "binomial response outside [0, trials]");
            require(std::abs(yi - std::round(yi)) <= 1e-9, "binomial response must be integral");
        }
    }
}

Dataset Dataset::rows(const std::vector<int>& idx) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    if (trials) out.trials = Eigen::VectorXi(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out.X.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
        out.y(static_cast<Eigen::Index>(r)) = y(idx[r]);
        if (trials) (*out.trials)(static_cast<Eigen::Index>(r)) = (*trials)(idx[r]);
    }
    out.feature_names = feature_names;
    out.response_name = response_name;
    return out;
}

Dataset dataset_from_csv(const std::string& path, const std::string& response,
                         const std::optional<std::string>& trials_column) {
    const auto table = csvio::load(path);
    std::vector<std::string> feature_cols;
    for (const auto& col : table.columns) {
        if (col == response) continue;
        if (trials_column && col == *trials_column) continue;
        feature_cols.push_back(col);
    }
    if (feature_cols.empty()) throw std::invalid_argument("CSV has no feature columns");

    Dataset d;
    d.response_name = response;
    d.feature_names = feature_cols;
    const auto yv = csvio::numeric_column(table, response);
    d.y = Eigen::Map<const Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));
    d.X.resize(static_cast<Eigen::Index>(yv.size()), static_cast<Eigen::Index>(feature_cols.size()));
    for (std::size_t c = 0; c < feature_cols.size(); ++c) {
        const auto col = csvio::numeric_column(table, feature_cols[c]);
        d.X.col(static_cast<Eigen::Index>(c)) =
            Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
    }
    if (trials_column) {
        const auto tv = csvio::numeric_column(table, *trials_column);
        Eigen::VectorXi t(static_cast<Eigen::Index>(tv.size()));
        for (std::size_t i = 0; i < tv.size(); ++i) {
            if (std::abs(tv[i] - std::round(tv[i])) > 1e-9)
                throw std::invalid_argument("trials column must hold integers");
            t(static_cast<Eigen::Index>(i)) = static_cast<int>(std::round(tv[i]));
        }
        d.trials = std::move(t);
    }
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// Penalty / link names
// ---------------------------------------------------------------------------

std::string penalty_name(Penalty k) {
    switch (k) {
        case Penalty::ols: return "ols";
        case Penalty::ridge: return "ridge";
        case Penalty::lasso: return "lasso";
        case Penalty::alasso: return "alasso";
        case Penalty::enet: return "enet";
        case Penalty::aenet: return "aenet";
    }
    return "?";
}

Penalty penalty_from_name(const std::string& name) {
    if (name == "ols") return Penalty::ols;
    if (name == "ridge") return Penalty::ridge;
    if (name == "lasso") return Penalty::lasso;
    if (name == "alasso") return Penalty::alasso;
    if (name == "enet") return Penalty::enet;
    if (name == "aenet") return Penalty::aenet;
    throw std::invalid_argument("unknown penalty: " + name);
}

std::string link_name(Link l) {
    switch (l) {
        case Link::logit: return "logit";
        case Link::cloglog: return "cloglog";
        case Link::probit: return "probit";
    }
    return "?";
}

Link link_from_name(const std::string& name) {
    if (name == "logit") return Link::logit;
    if (name == "cloglog") return Link::cloglog;
    if (name == "probit") return Link::probit;
    throw std::invalid_argument("unknown link: " + name);
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

namespace {

struct Standardized {
    Eigen::MatrixXd Xs;        // centered, unit-norm columns (degenerate cols zeroed)
    Eigen::VectorXd ys;        // centered response
    Eigen::VectorXd col_mean;
    Eigen::VectorXd col_norm;  // 0 marks a constant column
    double y_mean = 0.0;
};

Standardized standardize(const Dataset& d) {
    Standardized s;
    const int p = d.p();
    s.col_mean = d.X.colwise().mean();
    s.Xs = d.X.rowwise() - s.col_mean.transpose();
    s.col_norm.resize(p);
    for (int j = 0; j < p; ++j) {
        const double nrm = s.Xs.col(j).norm();
        if (nrm > 1e-12) {
            s.Xs.col(j) /= nrm;
            s.col_norm(j) = nrm;
        } else {
            s.Xs.col(j).setZero();
            s.col_norm(j) = 0.0;
        }
    }
    s.y_mean = d.y.mean();
    s.ys = d.y.array() - s.y_mean;
    return s;
}

Eigen::VectorXd destandardize(const Standardized& s, const Eigen::VectorXd& b) {
    const int p = static_cast<int>(b.size());
    Eigen::VectorXd beta(p + 1);
    double intercept = s.y_mean;
    for (int j = 0; j < p; ++j) {
        const double bj = s.col_norm(j) > 0.0 ? b(j) / s.col_norm(j) : 0.0;
        beta(j + 1) = bj;
        intercept -= bj * s.col_mean(j);
    }
    beta(0) = intercept;
    return beta;
}

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

struct L1Weights {
    double alpha = 1.0;           // L1 fraction of lambda
    Eigen::VectorXd w;            // per-coordinate L1 multiplier
};

L1Weights l1_weights(const PenaltySpec& spec, int p) {
    L1Weights lw;
    lw.w = Eigen::VectorXd::Ones(p);
    switch (spec.kind) {
        case Penalty::lasso: lw.alpha = 1.0; break;
        case Penalty::alasso:
            lw.alpha = 1.0;
            if (spec.adaptive_weights) lw.w = *spec.adaptive_weights;
            break;
        case Penalty::enet: lw.alpha = spec.alpha; break;
        case Penalty::aenet:
            lw.alpha = spec.alpha;
            if (spec.adaptive_weights) lw.w = *spec.adaptive_weights;
            break;
        default: break;
    }
    return lw;
}

bool is_l1_kind(Penalty k) {
    return k == Penalty::lasso || k == Penalty::alasso || k == Penalty::enet ||
           k == Penalty::aenet;
}

// Coordinate descent on
//   (1/2)||ys - Xs b||^2 + lam*(a*sum w|b| + (1-a)/(2 sqrt(n)) ||b||^2).
// Columns have unit norm so each coordinate update is a closed-form
// soft-threshold.  The 1/sqrt(n) keeps the L1:L2 balance of the standard
// unit-variance elastic-net parameterization under unit-norm columns
// (without it the ridge part overwhelms the fit as n grows).  Stops when
// the per-coordinate KKT residual is <= 1e-7.
Eigen::VectorXd coordinate_descent(const Standardized& s, double lambda, const L1Weights& lw,
                                   Eigen::VectorXd b0,
                                   std::vector<double>* sweep_objectives = nullptr) {
    const int p = static_cast<int>(s.Xs.cols());
    Eigen::VectorXd b = std::move(b0);
    if (b.size() != p) b = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd r = s.ys - s.Xs * b;
    const double l2 = lambda * (1.0 - lw.alpha) / std::sqrt(static_cast<double>(s.Xs.rows()));
    const double denom = 1.0 + l2;

    auto objective = [&]() {
        double pen = 0.0;
        for (int j = 0; j < p; ++j)
            pen += lambda * lw.alpha * lw.w(j) * std::abs(b(j)) + 0.5 * l2 * b(j) * b(j);
        return 0.5 * (s.ys - s.Xs * b).squaredNorm() + pen;
    };

    const int max_sweeps = 100000;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (int j = 0; j < p; ++j) {
            if (s.col_norm(j) == 0.0) continue;
            const double bj = b(j);
            const double rho = s.Xs.col(j).dot(r) + bj;
            const double bn = soft_threshold(rho, lambda * lw.alpha * lw.w(j)) / denom;
            if (bn != bj) {
                r += s.Xs.col(j) * (bj - bn);
                b(j) = bn;
                max_delta = std::max(max_delta, std::abs(bn - bj));
            }
        }
        if (sweep_objectives) sweep_objectives->push_back(objective());
        if (max_delta <= 1e-11) {
            // KKT residual per coordinate, on a freshly computed residual so
            // incremental drift cannot mask a violation.
            r = s.ys - s.Xs * b;
            double kkt = 0.0;
            const Eigen::VectorXd g = s.Xs.transpose() * r;
            for (int j = 0; j < p; ++j) {
                if (s.col_norm(j) == 0.0) continue;
                const double t = lambda * lw.alpha * lw.w(j);
                double res;
                if (b(j) != 0.0)
                    res = std::abs(-g(j) + l2 * b(j) + t * (b(j) > 0 ? 1.0 : -1.0));
                else
                    res = std::max(0.0, std::abs(g(j)) - t);
                kkt = std::max(kkt, res);
            }
            if (kkt <= 1e-7) return b;
        }
    }
    throw std::runtime_error("coordinate descent did not converge");
}

}  // namespace

// ---------------------------------------------------------------------------
// fit_penalized
// ---------------------------------------------------------------------------

FittedModel fit_penalized_traced(const Dataset& d, const PenaltySpec& spec_in,
                                 std::vector<double>* sweep_objectives) {
    d.validate();
    require(!d.is_binomial(), "fit_penalized expects a continuous response");
    require(spec_in.lambda >= 0.0, "lambda must be >= 0");
    require(spec_in.alpha >= 0.0 && spec_in.alpha <= 1.0, "alpha must be in [0,1]");

    PenaltySpec spec = spec_in;
    const int n = d.n(), p = d.p();
    if ((spec.kind == Penalty::alasso || spec.kind == Penalty::aenet) && !spec.adaptive_weights)
        spec.adaptive_weights = default_adaptive_weights(d, 5, kAdaptiveSeed);
    if (spec.adaptive_weights) {
        require(spec.adaptive_weights->size() == p, "adaptive weights length mismatch");
        require((spec.adaptive_weights->array() > 0.0).all(), "adaptive weights must be positive");
    }

    const Standardized s = standardize(d);
    Eigen::VectorXd b;

    switch (spec.kind) {
        case Penalty::ols: {
            if (p >= n) throw std::invalid_argument("OLS underdetermined");
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s.Xs);
            if (qr.rank() < p) throw std::runtime_error("singular design");
            b = qr.solve(s.ys);
            break;
        }
        case Penalty::ridge: {
            Eigen::MatrixXd A = s.Xs.transpose() * s.Xs;
            A.diagonal().array() += spec.lambda;
            b = Eigen::LDLT<Eigen::MatrixXd>(A).solve(s.Xs.transpose() * s.ys);
            break;
        }
        default:
            b = coordinate_descent(s, spec.lambda, l1_weights(spec, p), Eigen::VectorXd::Zero(p),
                                   sweep_objectives);
            break;
    }

    FittedModel m;
    m.spec = spec;
    m.beta = destandardize(s, b);
    for (int j = 0; j < p; ++j) {
        const bool in = is_l1_kind(spec.kind) ? (b(j) != 0.0) : (s.col_norm(j) > 0.0);
        if (in) m.support.push_back(j);
    }
    return m;
}

FittedModel fit_penalized(const Dataset& d, const PenaltySpec& spec) {
    return fit_penalized_traced(d, spec, nullptr);
}

double FittedModel::linear_predictor(const Eigen::VectorXd& x) const {
    if (link) {
        double eta = beta(0);
        for (std::size_t k = 0; k < glm_variables.size(); ++k)
            eta += beta(static_cast<Eigen::Index>(k) + 1) * x(glm_variables[k]);
        return eta;
    }
    double v = beta(0);
    for (int j = 0; j < static_cast<int>(beta.size()) - 1; ++j) v += beta(j + 1) * x(j);
    return v;
}

namespace {

double clamp_prob(double p) { return std::min(1.0 - 1e-10, std::max(1e-10, p)); }

double inv_link(Link link, double eta) {
    switch (link) {
        case Link::logit:
            eta = std::clamp(eta, -30.0, 30.0);
            return clamp_prob(1.0 / (1.0 + std::exp(-eta)));
        case Link::cloglog:
            eta = std::clamp(eta, -30.0, 30.0);
            return clamp_prob(-std::expm1(-std::exp(eta)));
        case Link::probit:
            return clamp_prob(normal_cdf(eta));
    }
    return 0.5;
}

double dmu_deta(Link link, double eta, double p) {
    switch (link) {
        case Link::logit:
            return p * (1.0 - p);
        case Link::cloglog: {
            const double e = std::clamp(eta, -30.0, 30.0);
            return std::exp(e - std::exp(e));
        }
        case Link::probit:
            return std::exp(-0.5 * eta * eta) / std::sqrt(2.0 * M_PI);
    }
    return 0.0;
}

double link_eta(Link link, double p) {
    p = clamp_prob(p);
    switch (link) {
        case Link::logit: return std::log(p / (1.0 - p));
        case Link::cloglog: return std::log(-std::log1p(-p));
        case Link::probit: return normal_quantile(p);
    }
    return 0.0;
}

// +1 / -1 when the fitted probability (or linear predictor) sits on the
// upper / lower clamp, 0 in the interior.
int clamp_state(Link link, double eta) {
    if (link != Link::probit && eta >= 30.0) return 1;
    if (link != Link::probit && eta <= -30.0) return -1;
    double p_raw = 0.5;
    switch (link) {
        case Link::logit: p_raw = 1.0 / (1.0 + std::exp(-std::clamp(eta, -30.0, 30.0))); break;
        case Link::cloglog: p_raw = -std::expm1(-std::exp(std::clamp(eta, -30.0, 30.0))); break;
        case Link::probit: p_raw = normal_cdf(eta); break;
    }
    if (p_raw >= 1.0 - 1e-10) return 1;
    if (p_raw <= 1e-10) return -1;
    return 0;
}

}  // namespace

double FittedModel::predict(const Eigen::VectorXd& x) const {
    const double eta = linear_predictor(x);
    if (link) return inv_link(*link, eta);
    return eta;
}

core::ComponentPredictive FittedModel::predictive(const Eigen::VectorXd& x,
                                                  double var_of_fit) const {
    return core::ComponentPredictive::gaussian(predict(x), sigma2_hat + var_of_fit);
}

// ---------------------------------------------------------------------------
// Lambda selection and adaptive weights
// ---------------------------------------------------------------------------

namespace {

std::vector<int> fold_assignment(int n, int folds, std::uint64_t seed) {
    Rng rng(seed);
    const auto perm = rng.permutation(n);
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % folds;
    return fold;
}

std::vector<double> lambda_grid(const Dataset& d, const PenaltySpec& spec) {
    const Standardized s = standardize(d);
    const L1Weights lw = l1_weights(spec, d.p());
    double lmax = 0.0;
    for (int j = 0; j < d.p(); ++j) {
        if (s.col_norm(j) == 0.0) continue;
        const double g = std::abs(s.Xs.col(j).dot(s.ys)) / lw.w(j);
        lmax = std::max(lmax, g);
    }
    if (lmax <= 0.0) lmax = 1.0;
    const double denom = spec.kind == Penalty::ridge ? 1e-3 : std::max(lw.alpha, 1e-3);
    lmax /= denom;
    const double ratio = d.n() < d.p() ? 1e-2 : 1e-4;
    std::vector<double> grid(100);
    for (int i = 0; i < 100; ++i)
        grid[static_cast<std::size_t>(i)] = lmax * std::pow(ratio, static_cast<double>(i) / 99.0);
    return grid;  // descending
}

}  // namespace

double cv_select_lambda(const Dataset& d, PenaltySpec spec, int folds, std::uint64_t seed,
                        int max_support) {
    d.validate();
    require(folds >= 2 && folds <= d.n(), "cv folds must be in [2, n]");
    if (spec.kind == Penalty::ols) return 0.0;
    if ((spec.kind == Penalty::alasso || spec.kind == Penalty::aenet) && !spec.adaptive_weights)
        spec.adaptive_weights = default_adaptive_weights(d, folds, kAdaptiveSeed);

    const auto grid = lambda_grid(d, spec);
    const auto fold = fold_assignment(d.n(), folds, seed);
    std::vector<double> cv_err(grid.size(), 0.0);

    // Admissibility by full-data support size along the path.
    std::vector<char> admissible(grid.size(), 1);
    if (max_support > 0 && spec.kind != Penalty::ridge) {
        const Standardized sfull = standardize(d);
        const L1Weights lwfull = l1_weights(spec, d.p());
        Eigen::VectorXd warm = Eigen::VectorXd::Zero(d.p());
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            warm = coordinate_descent(sfull, grid[gi], lwfull, warm);
            int nz = 0;
            for (int j = 0; j < d.p(); ++j)
                if (warm(j) != 0.0) ++nz;
            admissible[gi] = nz <= max_support ? 1 : 0;
        }
    }

    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_idx, test_idx;
        for (int i = 0; i < d.n(); ++i)
            (fold[static_cast<std::size_t>(i)] == f ? test_idx : train_idx).push_back(i);
        if (train_idx.size() < 2 || test_idx.empty()) continue;
        const Dataset train = d.rows(train_idx);
        const Standardized s = standardize(train);
        const L1Weights lw = l1_weights(spec, d.p());

        // Ridge path reuses one eigendecomposition of X'X per fold.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        Eigen::VectorXd proj;
        if (spec.kind == Penalty::ridge) {
            es.compute(s.Xs.transpose() * s.Xs);
            proj = es.eigenvectors().transpose() * (s.Xs.transpose() * s.ys);
        }

        Eigen::VectorXd warm = Eigen::VectorXd::Zero(d.p());
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            const double lambda = grid[gi];
            Eigen::VectorXd b;
            if (spec.kind == Penalty::ridge) {
                b = es.eigenvectors() *
                    (proj.array() / (es.eigenvalues().array() + lambda)).matrix();
            } else {
                b = coordinate_descent(s, lambda, lw, warm);
                warm = b;
            }
            const Eigen::VectorXd beta = destandardize(s, b);
            for (int t : test_idx) {
                double pred = beta(0);
                for (int j = 0; j < d.p(); ++j) pred += beta(j + 1) * d.X(t, j);
                const double e = d.y(t) - pred;
                cv_err[gi] += e * e;
            }
        }
    }

    std::size_t best = grid.size();
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        if (!admissible[gi]) continue;
        if (best == grid.size() || cv_err[gi] < cv_err[best]) best = gi;  // ties keep the larger lambda
    }
    if (best == grid.size()) best = 0;  // the largest lambda is always the sparsest
    return grid[best];
}

Eigen::VectorXd default_adaptive_weights(const Dataset& d, int folds, std::uint64_t seed) {
    PenaltySpec ridge;
    ridge.kind = Penalty::ridge;
    ridge.lambda = cv_select_lambda(d, ridge, folds, seed);
    const FittedModel m = fit_penalized(d, ridge);
    Eigen::VectorXd w(d.p());
    for (int j = 0; j < d.p(); ++j) {
        const double b = std::abs(m.beta(j + 1));
        w(j) = 1.0 / std::max(b, 1e-8);  // a zero ridge coefficient keeps a finite (huge) penalty
    }
    return w;
}

PenaltySpec resolve_spec(const Dataset& d, PenaltySpec spec, int folds, std::uint64_t seed,
                         int max_support) {
    if ((spec.kind == Penalty::alasso || spec.kind == Penalty::aenet) && !spec.adaptive_weights)
        spec.adaptive_weights = default_adaptive_weights(d, folds, seed);
    if (spec.kind != Penalty::ols)
        spec.lambda = cv_select_lambda(d, spec, folds, seed, max_support);
    return spec;
}

// ---------------------------------------------------------------------------
// sigma^2 and bootstrap prediction variance
// ---------------------------------------------------------------------------

namespace {

double ols_rss(const Dataset& d, const std::vector<int>& support) {
    const int n = d.n();
    const int s = static_cast<int>(support.size());
    Eigen::MatrixXd M(n, s + 1);
    M.col(0).setOnes();
    for (int k = 0; k < s; ++k) M.col(k + 1) = d.X.col(support[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd coef = M.colPivHouseholderQr().solve(d.y);
    return (d.y - M * coef).squaredNorm();
}

}  // namespace

double estimate_sigma2(const Dataset& d, const FittedModel& m) {
    d.validate();
    std::vector<int> support = m.support;
    if (m.spec.kind == Penalty::ridge) {
        // Ridge selects nothing; borrow the elastic-net support.
        PenaltySpec en;
        en.kind = Penalty::enet;
        en.alpha = 0.5;
        en.lambda = cv_select_lambda(d, en, 5, kSigmaEnetSeed);
        support = fit_penalized(d, en).support;
    }
    const int s = static_cast<int>(support.size());
    if (s >= d.n() - 1) throw std::invalid_argument("saturated support");
    const double rss = ols_rss(d, support);
    return rss / static_cast<double>(d.n() - s - 1);
}

double bootstrap_pred_variance(const Dataset& d, const PenaltySpec& spec,
                               const Eigen::VectorXd& x_new, int B, std::uint64_t seed) {
    d.validate();
    require(B >= 50, "bootstrap_pred_variance needs B >= 50");
    std::vector<double> preds(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(b));
        std::string last_error;
        bool done = false;
        for (int attempt = 0; attempt < 10 && !done; ++attempt) {
            const auto idx = rng.resample_indices(d.n(), d.n());
            try {
                const FittedModel m = fit_penalized(d.rows(idx), spec);
                preds[static_cast<std::size_t>(b)] = m.predict(x_new);
                done = true;
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        if (!done)
            throw std::runtime_error("bootstrap replicate " + std::to_string(b) +
                                     " failed after 10 redraws: " + last_error);
    }
    return sample_variance(preds);
}

// ---------------------------------------------------------------------------
// Binomial GLM (IRLS with step halving)
// ---------------------------------------------------------------------------

FittedModel fit_glm_binomial(const Dataset& d, Link link, const std::vector<int>& variables,
                             const GlmOptions& opt) {
    d.validate();
    require(d.is_binomial(), "fit_glm_binomial needs a binomial dataset (trials column)");
    for (int v : variables) require(v >= 0 && v < d.p(), "GLM variable index out of range");

    const int n = d.n();
    const int k = static_cast<int>(variables.size()) + 1;
    Eigen::MatrixXd M(n, k);
    M.col(0).setOnes();
    for (int j = 1; j < k; ++j) M.col(j) = d.X.col(variables[static_cast<std::size_t>(j - 1)]);
    Eigen::VectorXd T(n);
    for (int i = 0; i < n; ++i) T(i) = (*d.trials)(i);

    FittedModel m;
    m.link = link;
    m.glm_variables = variables;
    m.spec.kind = Penalty::ols;
    m.spec.lambda = opt.ridge;
    m.n_params = k;

    auto log_lik = [&](const Eigen::VectorXd& beta) {
        KahanSum ll;
        for (int i = 0; i < n; ++i) {
            const double p = inv_link(link, M.row(i).dot(beta));
            ll.add(d.y(i) * std::log(p) + (T(i) - d.y(i)) * std::log1p(-p) +
                   log_choose(static_cast<int>(T(i)), static_cast<int>(std::round(d.y(i)))));
        }
        return ll.value();
    };
    auto objective = [&](const Eigen::VectorXd& beta) {
        double pen = 0.0;
        for (int j = 1; j < k; ++j) pen += beta(j) * beta(j);
        return -log_lik(beta) + 0.5 * opt.ridge * pen;
    };

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    if (variables.empty() && opt.ridge == 0.0) {
        // Intercept-only closed form: p-hat is the pooled success fraction.
        const double phat = d.y.sum() / T.sum();
        beta(0) = link_eta(link, phat);
        m.beta = Eigen::VectorXd::Zero(1);
        m.beta(0) = beta(0);
        const double w = T.sum() * dmu_deta(link, beta(0), clamp_prob(phat)) *
                         dmu_deta(link, beta(0), clamp_prob(phat)) /
                         (clamp_prob(phat) * (1.0 - clamp_prob(phat)));
        m.beta_cov = Eigen::MatrixXd::Constant(1, 1, w > 0.0 ? 1.0 / w : 0.0);
        m.log_likelihood = log_lik(beta);
        return m;
    }

    beta(0) = link_eta(link, clamp_prob(d.y.sum() / T.sum()));
    double obj = objective(beta);
    std::ostringstream trace;
    bool converged = false;
    bool clamped_at_fit = false;
    Eigen::MatrixXd info(k, k);

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        Eigen::VectorXd score = Eigen::VectorXd::Zero(k);
        info.setZero();
        clamped_at_fit = false;
        for (int i = 0; i < n; ++i) {
            const double eta = M.row(i).dot(beta);
            const auto cl = clamp_state(link, eta);
            const double p = inv_link(link, eta);
            const double g = dmu_deta(link, std::clamp(eta, -30.0, 30.0), p);
            const double var1 = p * (1.0 - p);
            const double u = (d.y(i) - T(i) * p) * g / var1;
            // The clamped likelihood is flat further into a clamp, so a
            // gradient pointing that way can never be realized; dropping it
            // keeps the line search from stalling on phantom improvements.
            if ((cl > 0 && u > 0.0) || (cl < 0 && u < 0.0)) {
                clamped_at_fit = true;
                continue;
            }
            const double w = T(i) * g * g / var1;
            score += u * M.row(i).transpose();
            info += w * (M.row(i).transpose() * M.row(i));
        }
        for (int j = 1; j < k; ++j) {
            score(j) -= opt.ridge * beta(j);
            info(j, j) += opt.ridge;
        }

        const double score_max = score.cwiseAbs().maxCoeff();
        trace << "iter " << iter << " |score|=" << score_max << "; ";
        if (score_max <= opt.tol) {
            converged = true;
            break;
        }

        Eigen::VectorXd step = info.ldlt().solve(score);
        if (!step.allFinite()) throw std::runtime_error("IRLS diverged: " + trace.str());

        // Step halving keeps the penalized deviance non-increasing.
        double scale = 1.0;
        bool accepted = false;
        const double prev_obj = obj;
        for (int h = 0; h < 40; ++h) {
            const Eigen::VectorXd cand = beta + scale * step;
            const double cand_obj = objective(cand);
            if (cand_obj <= obj + 1e-12) {
                beta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        // The clamps make the objective kinked; on a clamp boundary the score
        // jumps across zero and objective stationarity is the convergence test.
        const bool stalled = !accepted || (prev_obj - obj <= 1e-13 * std::max(1.0, std::abs(obj)) &&
                                           scale < 1e-6);
        if (stalled) {
            if (clamped_at_fit) {
                converged = true;
                break;
            }
            if (!accepted) throw std::runtime_error("IRLS diverged: " + trace.str());
        }
    }
    if (!converged) throw std::runtime_error("IRLS diverged: " + trace.str());
    // A plain fit that converged while leaning on a clamp means the
    // unpenalized MLE ran away (separation).
    if (opt.ridge == 0.0 && clamped_at_fit)
        throw std::runtime_error("IRLS diverged: separation, fit on clamp; " + trace.str());

    m.beta = beta;
    m.beta_cov = info.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    m.log_likelihood = log_lik(beta);
    return m;
}

FittedModel fit_glm_binomial_robust(const Dataset& d, Link link,
                                    const std::vector<int>& variables) {
    try {
        return fit_glm_binomial(d, link, variables);
    } catch (const std::runtime_error&) {
        GlmOptions opt;
        opt.ridge = 1e-4;
        opt.max_iter = 500;  // the penalized optimum can sit far out along the separation path
        FittedModel m = fit_glm_binomial(d, link, variables, opt);
        m.ridge_fallback = true;
        return m;
    }
}

double glm_prob_variance(const FittedModel& m, const Eigen::VectorXd& x) {
    if (!m.link) throw std::invalid_argument("glm_prob_variance needs a GLM fit");
    const int k = static_cast<int>(m.beta.size());
    Eigen::VectorXd row(k);
    row(0) = 1.0;
    for (int j = 1; j < k; ++j) row(j) = x(m.glm_variables[static_cast<std::size_t>(j - 1)]);
    const double eta = row.dot(m.beta);
    const double p = inv_link(*m.link, eta);
    const double g = dmu_deta(*m.link, eta, p);
    return g * g * row.dot(m.beta_cov * row);
}

std::vector<GridModelSpec> model_grid(const std::vector<Link>& links,
                                      const std::vector<std::vector<int>>& variable_sets) {
    require(!links.empty() && !variable_sets.empty(), "model_grid needs nonempty lists");
    std::vector<GridModelSpec> grid;
    grid.reserve(links.size() * variable_sets.size());
    for (const auto link : links)
        for (const auto& vars : variable_sets) grid.push_back({link, vars});
    return grid;
}

}  // namespace panova::fit
