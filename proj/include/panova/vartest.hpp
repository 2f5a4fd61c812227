#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "panova/core.hpp"
#include "panova/fit.hpp"

namespace panova::vartest {

// Null statistic construction.  The literal recentring z' - (zbar' - tau)
// forces every resample mean to tau, so its t statistic is identically zero;
// `shifted` is the standard bootstrap-null form t~ = (zbar'_j - zbar)/SE(z'_j)
// and is the default.
enum class NullForm { shifted, literal };

// H0: E[term/total] >= tau vs H1: < tau.  Reject when the achieved
// significance level is small (default threshold 0.05).
struct TestOutcome {
    std::vector<double> z_samples;
    double z_bar = 0.0;
    double t_stat = 0.0;
    double tau = 0.0;
    int J = 0;
    double asl = 1.0;
    std::map<double, bool> reject_at;  // conventional levels 0.01 / 0.05 / 0.1
    bool degenerate = false;
    NullForm form = NullForm::shifted;

    std::string to_json() const;
};

constexpr double kDefaultAslThreshold = 0.05;

TestOutcome asl_test(const std::vector<double>& z, double tau, int J, std::uint64_t seed,
                     NullForm form = NullForm::shifted);

using TreePipeline =
    std::function<core::FactorTree(const fit::Dataset&, std::uint64_t seed)>;

struct RatioSamples {
    std::vector<double> values;
    // Replicates whose ratio left [0,1] by more than 1e-9 (a decomposition
    // bug upstream, never silently clamped).
    std::vector<int> out_of_range;
};

// Z_b = term[term_index] / total on case-resampled datasets.  Failed
// replicates are redrawn at most 10 times, then the error propagates.
RatioSamples bootstrap_ratio_samples(const TreePipeline& pipeline, const fit::Dataset& d,
                                     int term_index, int B, std::uint64_t seed,
                                     int threads = 1);

// One bootstrap pass shared by every term and every tau.
struct TermTestTable {
    std::vector<double> taus;
    std::vector<std::vector<double>> z;              // z[term][replicate]
    std::vector<double> z_bar;                       // per term
    std::vector<std::vector<TestOutcome>> outcomes;  // outcomes[term][tau]
    std::vector<int> out_of_range;
};

TermTestTable test_all_terms(const TreePipeline& pipeline, const fit::Dataset& d, int n_terms,
                             const std::vector<double>& taus, int B, int J, std::uint64_t seed,
                             int threads = 1);

// Rows = terms, cells "zbar (ASL_t1,ASL_t2,...)" plus full-precision columns.
std::string term_table_to_csv(const TermTestTable& table,
                              const std::vector<std::string>& term_names);

}  // namespace panova::vartest
