#include "panova/intervals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "panova/csvio.hpp"
#include "panova/mathutil.hpp"

namespace panova::intervals {

double component_cdf(const core::ComponentPredictive& c, double x) {
    switch (c.family) {
        case core::Family::gaussian: {
            const double sd = std::sqrt(c.variance);
            if (sd == 0.0) return x >= c.mean ? 1.0 : 0.0;
            return normal_cdf((x - c.mean) / sd);
        }
        case core::Family::binomial_count:
            return binomial_cdf(static_cast<int>(std::floor(x)), c.trials, c.success_prob);
        case core::Family::empirical: {
            // samples are kept sorted by the constructor
            const auto it = std::upper_bound(c.samples.begin(), c.samples.end(), x);
            return static_cast<double>(it - c.samples.begin()) /
                   static_cast<double>(c.samples.size());
        }
    }
    return 0.0;
}

double mixture_cdf(const core::PredictiveMixture& m, double x) {
    if (m.weights.empty()) throw std::invalid_argument("empty mixture");
    KahanSum s;
    for (std::size_t i = 0; i < m.weights.size(); ++i)
        s.add(m.weights[i] * component_cdf(m.components[i], x));
    return s.value();
}

namespace {

std::pair<double, double> support_bracket(const core::PredictiveMixture& m) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& c : m.components) {
        switch (c.family) {
            case core::Family::gaussian: {
                const double sd = std::sqrt(c.variance);
                lo = std::min(lo, c.mean - 40.0 * sd - 1.0);
                hi = std::max(hi, c.mean + 40.0 * sd + 1.0);
                break;
            }
            case core::Family::binomial_count:
                lo = std::min(lo, -1.0);
                hi = std::max(hi, static_cast<double>(c.trials) + 1.0);
                break;
            case core::Family::empirical:
                lo = std::min(lo, c.samples.front() - 1.0);
                hi = std::max(hi, c.samples.back() + 1.0);
                break;
        }
    }
    return {lo, hi};
}

}  // namespace

double mixture_quantile(const core::PredictiveMixture& m, double p) {
    m.validate();
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile level must be in (0,1)");

    // Pure-empirical one-component mixtures use the sorted-sample quantile.
    if (m.components.size() == 1 && m.components[0].family == core::Family::empirical)
        return quantile_type7_sorted(m.components[0].samples, p);

    auto [lo, hi] = support_bracket(m);
    double grow = std::max(1.0, hi - lo);
    while (mixture_cdf(m, lo) > p) {
        lo -= grow;
        grow *= 2.0;
    }
    grow = std::max(1.0, hi - lo);
    while (mixture_cdf(m, hi) < p) {
        hi += grow;
        grow *= 2.0;
    }

    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        mid = 0.5 * (lo + hi);
        const double f = mixture_cdf(m, mid);
        if (std::abs(f - p) <= 1e-10) return mid;
        if (f < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-13 * std::max({1.0, std::abs(lo), std::abs(hi)})) break;
    }
    // Atoms in the CDF: return the upper end of the collapsed bracket, the
    // generalized inverse.
    return hi;
}

PredictionInterval prediction_interval(const core::PredictiveMixture& m, double alpha,
                                       std::string source) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    PredictionInterval pi;
    pi.alpha = alpha;
    pi.source = std::move(source);
    pi.lower = mixture_quantile(m, alpha / 2.0);
    pi.upper = mixture_quantile(m, 1.0 - alpha / 2.0);
    return pi;
}

double sample_component(const core::ComponentPredictive& c, Rng& rng) {
    switch (c.family) {
        case core::Family::gaussian:
            return rng.normal(c.mean, std::sqrt(c.variance));
        case core::Family::binomial_count:
            return rng.binomial(c.trials, c.success_prob);
        case core::Family::empirical:
            return c.samples[rng.uniform_int(c.samples.size())];
    }
    return 0.0;
}

double sample_mixture(const core::PredictiveMixture& m, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        acc += m.weights[i];
        if (u < acc) return sample_component(m.components[i], rng);
    }
    return sample_component(m.components.back(), rng);
}

double coverage_estimate(const std::function<CoverageDraw(int, std::uint64_t)>& draw, int B,
                         std::uint64_t seed) {
    if (B < 100) throw std::invalid_argument("coverage_estimate needs B >= 100");
    int hits = 0;
    for (int b = 0; b < B; ++b) {
        const auto cd = draw(b, seed + static_cast<std::uint64_t>(b));
        if (cd.pi.contains(cd.y)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

SelectionResult select_model_list(const std::vector<std::pair<double, double>>& coverage_variance,
                                  double alpha, double delta) {
    if (coverage_variance.empty()) throw std::invalid_argument("no candidates");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be > 0");
    const double nominal = 1.0 - alpha;

    SelectionResult res;
    res.candidates.reserve(coverage_variance.size());
    int best_in_band = -1;
    int closest = 0;
    for (std::size_t i = 0; i < coverage_variance.size(); ++i) {
        const auto [cov, var] = coverage_variance[i];
        CandidateReport r;
        r.coverage = cov;
        r.variance = var;
        r.in_band = cov > nominal - delta && cov < nominal + delta;
        res.candidates.push_back(r);
        if (r.in_band &&
            (best_in_band < 0 || var < res.candidates[static_cast<std::size_t>(best_in_band)].variance))
            best_in_band = static_cast<int>(i);
        if (std::abs(cov - nominal) <
            std::abs(res.candidates[static_cast<std::size_t>(closest)].coverage - nominal))
            closest = static_cast<int>(i);
    }
    if (best_in_band >= 0) {
        res.chosen_index = best_in_band;
        res.within_band = true;
    } else {
        res.chosen_index = closest;
        res.within_band = false;
    }
    return res;
}

SelectionResult select_model_list(const std::vector<core::FactorTree>& candidates, double alpha,
                                  double delta, int g, std::uint64_t seed) {
    if (candidates.empty()) throw std::invalid_argument("no candidates");
    if (g < 1) throw std::invalid_argument("g must be >= 1");
    std::vector<std::pair<double, double>> cov_var;
    cov_var.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto mix = core::flatten(candidates[i]);
        const double var = core::mixture_variance(mix);
        const auto pi = prediction_interval(mix, alpha);
        Rng rng = Rng::stream(seed, i);
        int hits = 0;
        for (int k = 0; k < g; ++k)
            if (pi.contains(sample_mixture(mix, rng))) ++hits;
        cov_var.emplace_back(static_cast<double>(hits) / g, var);
    }
    return select_model_list(cov_var, alpha, delta);
}

std::string selection_to_csv(const SelectionResult& r) {
    csvio::Table t;
    t.columns = {"candidate", "coverage", "variance", "in_band", "chosen"};
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
        const auto& c = r.candidates[i];
        t.add_row({std::to_string(i), csvio::fmt(c.coverage), csvio::fmt(c.variance),
                   c.in_band ? "1" : "0",
                   static_cast<int>(i) == r.chosen_index ? "1" : "0"});
    }
    return t.to_string();
}

}  // namespace panova::intervals
