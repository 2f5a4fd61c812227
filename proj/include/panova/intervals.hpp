#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "panova/core.hpp"
#include "panova/rng.hpp"

namespace panova::intervals {

struct PredictionInterval {
    double lower = 0.0;
    double upper = 0.0;
    double alpha = 0.05;
    std::string source;

    double width() const { return upper - lower; }
    bool contains(double y) const { return y >= lower && y <= upper; }
};

double component_cdf(const core::ComponentPredictive& c, double x);
double mixture_cdf(const core::PredictiveMixture& m, double x);

// Root of the mixture CDF by bracketed bisection, to 1e-10 in probability
// (or an x-bracket of ~1e-13 relative for CDFs with atoms).
double mixture_quantile(const core::PredictiveMixture& m, double p);

// Equal-tail interval [q_{alpha/2}, q_{1-alpha/2}].
PredictionInterval prediction_interval(const core::PredictiveMixture& m, double alpha,
                                       std::string source = "");

double sample_component(const core::ComponentPredictive& c, Rng& rng);
double sample_mixture(const core::PredictiveMixture& m, Rng& rng);

struct CoverageDraw {
    PredictionInterval pi;
    double y = 0.0;
};

// Fraction of fresh outcomes landing in their replicate's interval.
double coverage_estimate(const std::function<CoverageDraw(int, std::uint64_t)>& draw, int B,
                         std::uint64_t seed);

struct CandidateReport {
    double coverage = 0.0;
    double variance = 0.0;
    bool in_band = false;
};

struct SelectionResult {
    int chosen_index = -1;
    bool within_band = false;  // false flags the closest-coverage fallback
    std::vector<CandidateReport> candidates;
};

// Among candidates with coverage in (1-alpha-delta, 1-alpha+delta), the one
// with the smallest variance; otherwise the candidate with coverage closest
// to 1-alpha, flagged.  Ties go to the lowest index.
SelectionResult select_model_list(const std::vector<std::pair<double, double>>& coverage_variance,
                                  double alpha, double delta);

// Tree candidates: variance is the flattened mixture's variance and coverage
// is self-coverage, g draws from the candidate's own mixture against its PI.
SelectionResult select_model_list(const std::vector<core::FactorTree>& candidates, double alpha,
                                  double delta, int g, std::uint64_t seed);

std::string selection_to_csv(const SelectionResult& r);

}  // namespace panova::intervals
