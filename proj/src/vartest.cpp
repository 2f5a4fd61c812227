#include "panova/vartest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "panova/csvio.hpp"
#include "panova/mathutil.hpp"
#include "panova/parallel.hpp"
#include "panova/rng.hpp"

namespace panova::vartest {

namespace {

const std::vector<double> kConventionalLevels = {0.01, 0.05, 0.1};

// Null t statistics for J inner resamples; independent of tau in the shifted
// form, which is what makes the ASL exactly monotone over a tau sweep.
std::vector<double> null_stats(const std::vector<double>& z, double z_bar, double tau, int J,
                               std::uint64_t seed, NullForm form) {
    const int B = static_cast<int>(z.size());
    const double sqrt_b = std::sqrt(static_cast<double>(B));
    std::vector<double> stats(static_cast<std::size_t>(J));

    // Accumulate deviations from z_bar so nearly-constant z vectors do not
    // lose their variance to cancellation.
    std::vector<double> dev(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dev[i] = z[i] - z_bar;

    std::vector<double> buf(form == NullForm::literal ? z.size() : 0);
    for (int j = 0; j < J; ++j) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(j));
        if (form == NullForm::shifted) {
            double sum_d = 0.0, sumsq_d = 0.0;
            for (int b = 0; b < B; ++b) {
                const double d = dev[rng.uniform_int(static_cast<std::uint64_t>(B))];
                sum_d += d;
                sumsq_d += d * d;
            }
            const double mean_d = sum_d / B;  // = resample mean - z_bar
            double var = (sumsq_d - B * mean_d * mean_d) / (B - 1);
            if (var < 0.0) var = 0.0;
            const double se = std::sqrt(var) / sqrt_b;
            stats[static_cast<std::size_t>(j)] =
                se > 0.0 ? mean_d / se
                         : (mean_d == 0.0 ? 0.0
                                          : std::copysign(std::numeric_limits<double>::infinity(),
                                                          mean_d));
        } else {
            // Literal recentring z~' = z' - (zbar' - tau): the recentred mean
            // is tau up to roundoff, so the numerator is ~0 by construction.
            for (int b = 0; b < B; ++b)
                buf[static_cast<std::size_t>(b)] = z[rng.uniform_int(static_cast<std::uint64_t>(B))];
            const double m = mean_of(buf);
            for (auto& v : buf) v -= (m - tau);
            const double recentred_mean = mean_of(buf);
            const double var = sample_variance(buf);
            const double se = std::sqrt(var) / sqrt_b;
            stats[static_cast<std::size_t>(j)] = se > 0.0 ? (recentred_mean - tau) / se : 0.0;
        }
    }
    return stats;
}

}  // namespace

TestOutcome asl_test(const std::vector<double>& z, double tau, int J, std::uint64_t seed,
                     NullForm form) {
    if (z.size() < 2) throw std::invalid_argument("asl_test needs B >= 2 samples");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0,1)");
    if (J < 1000) throw std::invalid_argument("asl_test needs J >= 1000");

    TestOutcome out;
    out.z_samples = z;
    out.tau = tau;
    out.J = J;
    out.form = form;
    out.z_bar = mean_of(z);
    const double sd = std::sqrt(sample_variance(z));

    if (sd == 0.0) {
        out.degenerate = true;
        out.asl = out.z_bar >= tau ? 1.0 : 0.0;
        out.t_stat = out.z_bar == tau
                         ? 0.0
                         : std::copysign(std::numeric_limits<double>::infinity(), out.z_bar - tau);
        for (double level : kConventionalLevels) out.reject_at[level] = out.asl < level;
        return out;
    }

    const double se = sd / std::sqrt(static_cast<double>(z.size()));
    out.t_stat = (out.z_bar - tau) / se;

    const auto stats = null_stats(z, out.z_bar, tau, J, seed, form);
    int count = 0;
    for (double t : stats)
        if (t <= out.t_stat) ++count;
    out.asl = static_cast<double>(count) / static_cast<double>(J);
    for (double level : kConventionalLevels) out.reject_at[level] = out.asl < level;
    return out;
}

std::string TestOutcome::to_json() const {
    nlohmann::json j;
    j["z_bar"] = z_bar;
    j["t_stat"] = t_stat;
    j["tau"] = tau;
    j["J"] = J;
    j["B"] = z_samples.size();
    j["asl"] = asl;
    j["degenerate"] = degenerate;
    j["form"] = form == NullForm::shifted ? "shifted-null" : "literal-recentre";
    nlohmann::json rej;
    for (const auto& [level, reject] : reject_at)
        rej[csvio::fmt_rounded(level, 2)] = reject;
    j["reject_at"] = rej;
    j["z_samples"] = z_samples;
    return j.dump(2);
}

RatioSamples bootstrap_ratio_samples(const TreePipeline& pipeline, const fit::Dataset& d,
                                     int term_index, int B, std::uint64_t seed, int threads) {
    d.validate();
    if (B < 50) throw std::invalid_argument("bootstrap_ratio_samples needs B >= 50");
    if (term_index < 0) throw std::invalid_argument("term index must be >= 0");

    RatioSamples out;
    out.values.resize(static_cast<std::size_t>(B));
    std::vector<char> flagged(static_cast<std::size_t>(B), 0);
    std::vector<std::string> errors(static_cast<std::size_t>(B));

    parallel_for(B, threads, [&](int b) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(b));
        std::string last_error = "no attempt";
        for (int attempt = 0; attempt < 10; ++attempt) {
            const auto idx = rng.resample_indices(d.n(), d.n());
            const std::uint64_t pipeline_seed = rng.next();
            try {
                const core::FactorTree tree = pipeline(d.rows(idx), pipeline_seed);
                const auto report = core::decompose_k(tree);
                if (term_index >= static_cast<int>(report.terms.size()))
                    throw std::invalid_argument("term index out of range for pipeline tree");
                if (report.total <= 0.0) throw std::runtime_error("non-positive total variance");
                const double zb = report.terms[static_cast<std::size_t>(term_index)] / report.total;
                out.values[static_cast<std::size_t>(b)] = zb;
                if (zb < -1e-9 || zb > 1.0 + 1e-9) flagged[static_cast<std::size_t>(b)] = 1;
                return;
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        errors[static_cast<std::size_t>(b)] = "replicate " + std::to_string(b) +
                                              " failed after 10 redraws: " + last_error;
    });

    for (const auto& err : errors)
        if (!err.empty()) throw std::runtime_error(err);
    for (int b = 0; b < B; ++b)
        if (flagged[static_cast<std::size_t>(b)]) out.out_of_range.push_back(b);
    return out;
}

TermTestTable test_all_terms(const TreePipeline& pipeline, const fit::Dataset& d, int n_terms,
                             const std::vector<double>& taus, int B, int J, std::uint64_t seed,
                             int threads) {
    d.validate();
    if (n_terms < 1) throw std::invalid_argument("test_all_terms needs n_terms >= 1");
    if (taus.empty()) throw std::invalid_argument("test_all_terms needs at least one tau");
    if (B < 50) throw std::invalid_argument("test_all_terms needs B >= 50");

    TermTestTable table;
    table.taus = taus;
    table.z.assign(static_cast<std::size_t>(n_terms), std::vector<double>(static_cast<std::size_t>(B)));

    // One bootstrap pass; every term's ratio comes from the same tree.
    std::vector<char> flagged(static_cast<std::size_t>(B), 0);
    std::vector<std::string> errors(static_cast<std::size_t>(B));
    parallel_for(B, threads, [&](int b) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(b));
        std::string last_error = "no attempt";
        for (int attempt = 0; attempt < 10; ++attempt) {
            const auto idx = rng.resample_indices(d.n(), d.n());
            const std::uint64_t pipeline_seed = rng.next();
            try {
                const core::FactorTree tree = pipeline(d.rows(idx), pipeline_seed);
                const auto report = core::decompose_k(tree);
                if (static_cast<int>(report.terms.size()) != n_terms)
                    throw std::invalid_argument("pipeline tree has unexpected term count");
                if (report.total <= 0.0) throw std::runtime_error("non-positive total variance");
                for (int k = 0; k < n_terms; ++k) {
                    const double zb = report.terms[static_cast<std::size_t>(k)] / report.total;
                    table.z[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] = zb;
                    if (zb < -1e-9 || zb > 1.0 + 1e-9) flagged[static_cast<std::size_t>(b)] = 1;
                }
                return;
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        errors[static_cast<std::size_t>(b)] = "replicate " + std::to_string(b) +
                                              " failed after 10 redraws: " + last_error;
    });
    for (const auto& err : errors)
        if (!err.empty()) throw std::runtime_error(err);
    for (int b = 0; b < B; ++b)
        if (flagged[static_cast<std::size_t>(b)]) table.out_of_range.push_back(b);

    table.outcomes.resize(static_cast<std::size_t>(n_terms));
    table.z_bar.resize(static_cast<std::size_t>(n_terms));
    for (int k = 0; k < n_terms; ++k) {
        table.z_bar[static_cast<std::size_t>(k)] = mean_of(table.z[static_cast<std::size_t>(k)]);
        auto& row = table.outcomes[static_cast<std::size_t>(k)];
        row.reserve(taus.size());
        // Same seed across taus: shared inner resamples keep the sweep monotone.
        const std::uint64_t term_seed = seed ^ (0xC2B2AE3D27D4EB4FULL * (static_cast<std::uint64_t>(k) + 1));
        for (double tau : taus)
            row.push_back(asl_test(table.z[static_cast<std::size_t>(k)], tau, J, term_seed));
    }
    return table;
}

std::string term_table_to_csv(const TermTestTable& table,
                              const std::vector<std::string>& term_names) {
    csvio::Table out;
    out.columns = {"term", "z_bar", "cell"};
    for (double tau : table.taus) out.columns.push_back("asl_tau_" + csvio::fmt_rounded(tau, 2));
    for (std::size_t k = 0; k < table.outcomes.size(); ++k) {
        std::vector<std::string> row;
        row.push_back(k < term_names.size() ? term_names[k] : "term" + std::to_string(k));
        row.push_back(csvio::fmt(table.z_bar[k]));
        std::string cell = csvio::fmt_rounded(table.z_bar[k], 2) + " (";
        for (std::size_t t = 0; t < table.outcomes[k].size(); ++t) {
            if (t) cell += ",";
            cell += csvio::fmt_rounded(table.outcomes[k][t].asl, 3);
        }
        cell += ")";
        row.push_back(cell);
        for (const auto& outc : table.outcomes[k]) row.push_back(csvio::fmt(outc.asl));
        out.add_row(std::move(row));
    }
    return out.to_string();
}

}  // namespace panova::vartest
