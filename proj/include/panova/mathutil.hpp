#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace panova {

// Neumaier-compensated accumulator.  Decomposition identities are asserted to
// 1e-9 relative or tighter, so plain left-to-right addition is not enough.
class KahanSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs);

// Mean and unbiased (n-1) variance, two-pass with compensated sums.
double mean_of(std::span<const double> xs);
double sample_variance(std::span<const double> xs);

double normal_cdf(double x);
double normal_quantile(double p);

double log_choose(int n, int k);
// P(X <= k) for X ~ Binomial(n, p).
double binomial_cdf(int k, int n, double p);

// R type-7 quantile of an ascending-sorted sample.
double quantile_type7_sorted(std::span<const double> sorted, double p);

}  // namespace panova
