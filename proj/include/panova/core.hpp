#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace panova::core {

enum class Family { gaussian, binomial_count, empirical };

// One candidate predictor's distribution for the next outcome, reduced to the
// moments the decomposition needs plus enough family detail to evaluate a CDF.
struct ComponentPredictive {
    double mean = 0.0;
    double variance = 0.0;
    Family family = Family::gaussian;
    int trials = 0;              // binomial-count only
    double success_prob = 0.0;   // binomial-count only
    std::vector<double> samples; // empirical only, ascending after construction

    static ComponentPredictive gaussian(double mean, double variance);
    static ComponentPredictive binomial_count(int trials, double success_prob);
    static ComponentPredictive empirical(std::vector<double> samples);

    void validate() const;
};

struct PredictiveMixture {
    std::vector<double> weights;
    std::vector<ComponentPredictive> components;

    void validate() const;
};

double mixture_mean(const PredictiveMixture& m);
double mixture_variance(const PredictiveMixture& m);

struct TwoTermDecomposition {
    double within = 0.0;   // E_V Var(Y | V)
    double between = 0.0;  // Var_V E(Y | V)
};

// Law of total variance over the whole mixture index.  Summation is
// compensated and strictly left-to-right, and mixture_variance() is defined
// as within + between, so the identity holds exactly.
TwoTermDecomposition two_term_decompose(const PredictiveMixture& m);

// Rectangular K-factor hierarchy of modeling choices.  Factor k has
// levels[k].size() levels; weights[k] stores the conditional probability of
// each level given the path so far, flattened row-major over paths; leaves
// are row-major with factor 0 slowest.
struct FactorTree {
    std::vector<std::string> factors;
    std::vector<std::vector<std::string>> levels;
    std::vector<std::vector<double>> weights;
    std::vector<ComponentPredictive> leaves;

    int depth() const { return static_cast<int>(factors.size()); }
    int level_count(int k) const { return static_cast<int>(levels[static_cast<std::size_t>(k)].size()); }
    std::size_t leaf_count() const;

    void validate() const;
};

// Leaf weight = product of edge weights along its path.
PredictiveMixture flatten(const FactorTree& t);

struct DecompositionReport {
    // K+1 entries: terms[0] = Var_{V1} E(Y|V1); terms[k] for 1 <= k < K is
    // E_{V1..Vk} Var_{V(k+1)} E(Y|V1..V(k+1)); terms[K] = E Var(Y|all factors).
    std::vector<double> terms;
    std::vector<std::string> sources;
    std::vector<std::string> interpretations;
    std::vector<double> proportions;
    double total = 0.0;
};

DecompositionReport decompose_k(const FactorTree& t);

// JSON document {factors, levels, weights, leaves}; round-trip is lossless
// for finite doubles and re-serialization is canonical (sorted keys).
std::string tree_to_json(const FactorTree& t, int indent = 2);
FactorTree tree_from_json(const std::string& text);
FactorTree load_tree(const std::string& path);
void save_tree(const FactorTree& t, const std::string& path, int indent = 2);

std::string report_to_json(const DecompositionReport& r);
// CSV with columns Source,Interpretation,Variance,Proportion plus a Total row.
std::string report_to_csv(const DecompositionReport& r);

}  // namespace panova::core
