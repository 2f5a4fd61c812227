#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "panova/core.hpp"
#include "panova/rng.hpp"

namespace testsupport {

inline std::string data_path(const std::string& rel) {
    return std::string(PANOVA_DATA_DIR) + "/" + rel;
}

// |x - printed| within half a unit in the last printed decimal.
inline bool matches_printed(double x, double printed, int decimals) {
    return std::abs(x - printed) <= 0.5 * std::pow(10.0, -decimals);
}

inline std::vector<double> random_simplex(panova::Rng& rng, int m) {
    std::vector<double> w(static_cast<std::size_t>(m));
    double total = 0.0;
    for (auto& v : w) {
        v = -std::log(1.0 - rng.uniform());
        total += v;
    }
    for (auto& v : w) v /= total;
    return w;
}

inline panova::core::FactorTree random_tree(panova::Rng& rng, const std::vector<int>& shape,
                                            double mean_scale = 2.0, double var_scale = 1.5) {
    panova::core::FactorTree t;
    const int K = static_cast<int>(shape.size());
    std::size_t paths = 1;
    for (int k = 0; k < K; ++k) {
        t.factors.push_back("V" + std::to_string(k + 1));
        std::vector<std::string> lv;
        for (int j = 0; j < shape[static_cast<std::size_t>(k)]; ++j)
            lv.push_back("v" + std::to_string(k + 1) + "_" + std::to_string(j + 1));
        t.levels.push_back(lv);
        std::vector<double> wk;
        for (std::size_t parent = 0; parent < paths; ++parent) {
            const auto g = random_simplex(rng, shape[static_cast<std::size_t>(k)]);
            wk.insert(wk.end(), g.begin(), g.end());
        }
        t.weights.push_back(std::move(wk));
        paths *= static_cast<std::size_t>(shape[static_cast<std::size_t>(k)]);
    }
    for (std::size_t i = 0; i < paths; ++i)
        t.leaves.push_back(panova::core::ComponentPredictive::gaussian(
            rng.normal(0.0, mean_scale), var_scale * (0.1 + rng.uniform())));
    t.validate();
    return t;
}

inline panova::core::PredictiveMixture random_mixture(panova::Rng& rng, int q) {
    panova::core::PredictiveMixture m;
    m.weights = random_simplex(rng, q);
    for (int i = 0; i < q; ++i)
        m.components.push_back(panova::core::ComponentPredictive::gaussian(
            rng.normal(0.0, 3.0), 0.05 + 2.0 * rng.uniform()));
    return m;
}

}  // namespace testsupport
