#include "panova/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "panova/mathutil.hpp"

namespace panova::core {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

// ---------------------------------------------------------------------------
// ComponentPredictive
// ---------------------------------------------------------------------------

ComponentPredictive ComponentPredictive::gaussian(double mean, double variance) {
    ComponentPredictive c;
    c.family = Family::gaussian;
    c.mean = mean;
    c.variance = variance;
    c.validate();
    return c;
}

ComponentPredictive ComponentPredictive::binomial_count(int trials, double success_prob) {
    ComponentPredictive c;
    c.family = Family::binomial_count;
    c.trials = trials;
    c.success_prob = success_prob;
    c.mean = trials * success_prob;
    c.variance = trials * success_prob * (1.0 - success_prob);
    c.validate();
    return c;
}

ComponentPredictive ComponentPredictive::empirical(std::vector<double> samples) {
    ComponentPredictive c;
    c.family = Family::empirical;
    c.samples = std::move(samples);
    require(c.samples.size() >= 2, "empirical component needs at least 2 samples");
    for (double s : c.samples) require(finite(s), "empirical sample not finite");
    std::sort(c.samples.begin(), c.samples.end());
    c.mean = mean_of(c.samples);
    c.variance = sample_variance(c.samples);
    return c;
}

void ComponentPredictive::validate() const {
    require(finite(mean) && finite(variance), "component moments must be finite");
    require(variance >= 0.0, "component variance must be >= 0");
    switch (family) {
        case Family::gaussian:
            break;
        case Family::binomial_count: {
            require(trials >= 1, "binomial-count needs trials >= 1");
            require(success_prob >= 0.0 && success_prob <= 1.0,
                    "binomial-count success-prob outside [0,1]");
            const double m = trials * success_prob;
            const double v = trials * success_prob * (1.0 - success_prob);
            require(std::abs(mean - m) <= 1e-10 && std::abs(variance - v) <= 1e-10,
                    "binomial-count moments inconsistent with (trials, success-prob)");
            break;
        }
        case Family::empirical:
            require(samples.size() >= 2, "empirical component needs at least 2 samples");
            break;
    }
}

// ---------------------------------------------------------------------------
// PredictiveMixture
// ---------------------------------------------------------------------------

void PredictiveMixture::validate() const {
    if (weights.empty() || components.empty()) throw std::invalid_argument("empty mixture");
    require(weights.size() == components.size(), "mixture weight/component length mismatch");
    KahanSum total;
    for (double w : weights) {
        require(finite(w) && w >= 0.0, "mixture weights must be >= 0");
        total.add(w);
    }
    require(std::abs(total.value() - 1.0) <= 1e-12, "mixture weights must sum to 1");
    for (const auto& c : components) c.validate();
}

double mixture_mean(const PredictiveMixture& m) {
    if (m.weights.empty()) throw std::invalid_argument("empty mixture");
    KahanSum acc;
    for (std::size_t i = 0; i < m.weights.size(); ++i)
        acc.add(m.weights[i] * m.components[i].mean);
    return acc.value();
}

TwoTermDecomposition two_term_decompose(const PredictiveMixture& m) {
    if (m.weights.empty()) throw std::invalid_argument("empty mixture");
    const double mu = mixture_mean(m);
    KahanSum within, between;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        within.add(m.weights[i] * m.components[i].variance);
        const double d = m.components[i].mean - mu;
        between.add(m.weights[i] * d * d);
    }
    return {within.value(), between.value()};
}

double mixture_variance(const PredictiveMixture& m) {
    const auto tt = two_term_decompose(m);
    return tt.within + tt.between;
}

// ---------------------------------------------------------------------------
// FactorTree
// ---------------------------------------------------------------------------

std::size_t FactorTree::leaf_count() const {
    std::size_t n = 1;
    for (const auto& lv : levels) n *= lv.size();
    return n;
}

void FactorTree::validate() const {
    const int K = depth();
    require(K >= 1, "factor tree needs depth >= 1");
    require(levels.size() == static_cast<std::size_t>(K), "levels/factors length mismatch");
    require(weights.size() == static_cast<std::size_t>(K), "weights/factors length mismatch");
    std::size_t paths = 1;
    for (int k = 0; k < K; ++k) {
        const std::size_t mk = levels[static_cast<std::size_t>(k)].size();
        require(mk >= 1, "factor with no levels");
        paths *= mk;
        const auto& wk = weights[static_cast<std::size_t>(k)];
        if (wk.size() != paths) throw std::invalid_argument("non-rectangular factor tree");
        // Each parent's child weights form a simplex; never normalized silently.
        for (std::size_t g = 0; g < wk.size(); g += mk) {
            KahanSum s;
            for (std::size_t j = 0; j < mk; ++j) {
                require(finite(wk[g + j]) && wk[g + j] >= 0.0, "edge weight must be >= 0");
                s.add(wk[g + j]);
            }
            require(std::abs(s.value() - 1.0) <= 1e-12, "child edge-weights must sum to 1");
        }
    }
    if (leaves.size() != paths) throw std::invalid_argument("non-rectangular factor tree");
    for (const auto& leaf : leaves) leaf.validate();
}

PredictiveMixture flatten(const FactorTree& t) {
    t.validate();
    const int K = t.depth();
    std::vector<double> prob{1.0};
    for (int k = 0; k < K; ++k) {
        const auto mk = static_cast<std::size_t>(t.level_count(k));
        const auto& wk = t.weights[static_cast<std::size_t>(k)];
        std::vector<double> next(prob.size() * mk);
        for (std::size_t parent = 0; parent < prob.size(); ++parent)
            for (std::size_t j = 0; j < mk; ++j)
                next[parent * mk + j] = prob[parent] * wk[parent * mk + j];
        prob = std::move(next);
    }
    PredictiveMixture m;
    m.weights = std::move(prob);
    m.components = t.leaves;
    // Products of per-node simplex weights can drift a few ulps from 1.
    KahanSum s;
    for (double w : m.weights) s.add(w);
    const double total = s.value();
    if (std::abs(total - 1.0) > 1e-12 && std::abs(total - 1.0) < 1e-9)
        for (auto& w : m.weights) w /= total;
    return m;
}

namespace {

std::string join_factors(const std::vector<std::string>& names, int upto) {
    std::string out;
    for (int i = upto; i >= 0; --i) {
        if (!out.empty()) out += ", ";
        out += names[static_cast<std::size_t>(i)];
    }
    return out;
}

}  // namespace

DecompositionReport decompose_k(const FactorTree& t) {
    t.validate();
    const int K = t.depth();

    // Conditional means at every internal depth, leaves upward.
    std::vector<std::vector<double>> cond_mean(static_cast<std::size_t>(K) + 1);
    auto& leaf_means = cond_mean[static_cast<std::size_t>(K)];
    leaf_means.resize(t.leaves.size());
    for (std::size_t i = 0; i < t.leaves.size(); ++i) leaf_means[i] = t.leaves[i].mean;
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

    // Path probabilities at every depth.
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

    DecompositionReport report;
    report.terms.resize(static_cast<std::size_t>(K) + 1);

    for (int k = 0; k < K; ++k) {
        const auto mk = static_cast<std::size_t>(t.level_count(k));
        const auto& wk = t.weights[static_cast<std::size_t>(k)];
        const auto& pp = path_prob[static_cast<std::size_t>(k)];
        const auto& parent_mean = cond_mean[static_cast<std::size_t>(k)];
        const auto& child_mean = cond_mean[static_cast<std::size_t>(k) + 1];
        KahanSum term;
        for (std::size_t parent = 0; parent < pp.size(); ++parent) {
            KahanSum var;
            for (std::size_t j = 0; j < mk; ++j) {
                const double d = child_mean[parent * mk + j] - parent_mean[parent];
                var.add(wk[parent * mk + j] * d * d);
            }
            term.add(pp[parent] * var.value());
        }
        report.terms[static_cast<std::size_t>(k)] = term.value();
    }

    {
        KahanSum resid;
        const auto& pp = path_prob[static_cast<std::size_t>(K)];
        for (std::size_t i = 0; i < t.leaves.size(); ++i)
            resid.add(pp[i] * t.leaves[i].variance);
        report.terms[static_cast<std::size_t>(K)] = resid.value();
    }

    KahanSum total;
    for (double v : report.terms) total.add(v);
    report.total = total.value();
    report.proportions.resize(report.terms.size());
    for (std::size_t i = 0; i < report.terms.size(); ++i)
        report.proportions[i] = report.total != 0.0 ? report.terms[i] / report.total : 0.0;

    report.sources.reserve(report.terms.size());
    report.interpretations.reserve(report.terms.size());
    for (int k = 0; k < K; ++k) {
        const auto& name = t.factors[static_cast<std::size_t>(k)];
        report.sources.push_back(name);
        if (k == 0)
            report.interpretations.push_back("Between " + name);
        else
            report.interpretations.push_back("Between " + name + " within " +
                                             join_factors(t.factors, k - 1));
    }
    report.sources.push_back("Predictions");
    report.interpretations.push_back("Within " + join_factors(t.factors, K - 1));
    return report;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json component_to_json(const ComponentPredictive& c) {
    json j;
    switch (c.family) {
        case Family::gaussian:
            j["family"] = "gaussian";
            j["mean"] = c.mean;
            j["variance"] = c.variance;
            break;
        case Family::binomial_count:
            j["family"] = "binomial-count";
            j["trials"] = c.trials;
            j["success_prob"] = c.success_prob;
            break;
        case Family::empirical:
            j["family"] = "empirical";
            j["samples"] = c.samples;
            break;
    }
    return j;
}

ComponentPredictive component_from_json(const json& j, std::size_t index) {
    const std::string where = "leaves[" + std::to_string(index) + "]";
    if (!j.is_object() || !j.contains("family"))
        throw std::invalid_argument(where + ": expected object with 'family'");
    const std::string fam = j.at("family").get<std::string>();
    if (fam == "gaussian") {
        if (!j.contains("mean") || !j.contains("variance"))
            throw std::invalid_argument(where + ": gaussian needs mean and variance");
        return ComponentPredictive::gaussian(j.at("mean").get<double>(),
                                             j.at("variance").get<double>());
    }
    if (fam == "binomial-count") {
        if (!j.contains("trials") || !j.contains("success_prob"))
            throw std::invalid_argument(where + ": binomial-count needs trials and success_prob");
        auto c = ComponentPredictive::binomial_count(j.at("trials").get<int>(),
                                                     j.at("success_prob").get<double>());
        // If moments were written out, they must agree with (trials, p).
        if (j.contains("mean") &&
            std::abs(j.at("mean").get<double>() - c.mean) > 1e-10)
            throw std::invalid_argument(where + ": mean inconsistent with trials*success_prob");
        if (j.contains("variance") &&
            std::abs(j.at("variance").get<double>() - c.variance) > 1e-10)
            throw std::invalid_argument(where + ": variance inconsistent with binomial moments");
        return c;
    }
    if (fam == "empirical") {
        if (!j.contains("samples"))
            throw std::invalid_argument(where + ": empirical needs samples");
        return ComponentPredictive::empirical(j.at("samples").get<std::vector<double>>());
    }
    throw std::invalid_argument(where + ": unknown family '" + fam + "'");
}

// weights[k] is written as a nested array of depth k+1 mirroring the path
// structure; e.g. depth 2 of a 3x4 grid is [[w..w] x3] with 4 entries each.
json nest_weights(const std::vector<double>& flat, const std::vector<std::size_t>& shape,
                  std::size_t dim, std::size_t offset, std::size_t span) {
    json arr = json::array();
    const std::size_t m = shape[dim];
    const std::size_t child_span = span / m;
    for (std::size_t j = 0; j < m; ++j) {
        if (dim + 1 == shape.size())
            arr.push_back(flat[offset + j]);
        else
            arr.push_back(nest_weights(flat, shape, dim + 1, offset + j * child_span, child_span));
    }
    return arr;
}

void unnest_weights(const json& node, const std::vector<std::size_t>& shape, std::size_t dim,
                    std::vector<double>& out) {
    if (!node.is_array() || node.size() != shape[dim])
        throw std::invalid_argument("non-rectangular factor tree");
    for (const auto& child : node) {
        if (dim + 1 == shape.size()) {
            if (!child.is_number()) throw std::invalid_argument("non-rectangular factor tree");
            out.push_back(child.get<double>());
        } else {
            unnest_weights(child, shape, dim + 1, out);
        }
    }
}

}  // namespace

std::string tree_to_json(const FactorTree& t, int indent) {
    t.validate();
    json j;
    j["factors"] = t.factors;
    j["levels"] = t.levels;
    json weights = json::array();
    for (int k = 0; k < t.depth(); ++k) {
        std::vector<std::size_t> shape;
        std::size_t span = 1;
        for (int d = 0; d <= k; ++d) {
            shape.push_back(static_cast<std::size_t>(t.level_count(d)));
            span *= static_cast<std::size_t>(t.level_count(d));
        }
        weights.push_back(nest_weights(t.weights[static_cast<std::size_t>(k)], shape, 0, 0, span));
    }
    j["weights"] = std::move(weights);
    json leaves = json::array();
    for (const auto& leaf : t.leaves) leaves.push_back(component_to_json(leaf));
    j["leaves"] = std::move(leaves);
    return j.dump(indent);
}

FactorTree tree_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("tree JSON parse error: ") + e.what());
    }
    for (const char* field : {"factors", "levels", "weights", "leaves"})
        if (!j.contains(field))
            throw std::invalid_argument(std::string("tree JSON missing field '") + field + "'");

    FactorTree t;
    t.factors = j.at("factors").get<std::vector<std::string>>();
    t.levels = j.at("levels").get<std::vector<std::vector<std::string>>>();
    if (t.factors.empty() || t.levels.size() != t.factors.size())
        throw std::invalid_argument("tree JSON: levels must match factors");

    const auto& jw = j.at("weights");
    if (!jw.is_array() || jw.size() != t.factors.size())
        throw std::invalid_argument("tree JSON: weights must have one entry per factor");
    for (std::size_t k = 0; k < jw.size(); ++k) {
        std::vector<std::size_t> shape;
        std::size_t span = 1;
        for (std::size_t d = 0; d <= k; ++d) {
            shape.push_back(t.levels[d].size());
            span *= t.levels[d].size();
        }
        std::vector<double> flat;
        flat.reserve(span);
        unnest_weights(jw[k], shape, 0, flat);
        t.weights.push_back(std::move(flat));
    }

    const auto& jl = j.at("leaves");
    if (!jl.is_array()) throw std::invalid_argument("tree JSON: leaves must be an array");
    for (std::size_t i = 0; i < jl.size(); ++i)
        t.leaves.push_back(component_from_json(jl[i], i));

    t.validate();
    return t;
}

FactorTree load_tree(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open tree file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return tree_from_json(buf.str());
}

void save_tree(const FactorTree& t, const std::string& path, int indent) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write tree file: " + path);
    out << tree_to_json(t, indent) << '\n';
}

std::string report_to_json(const DecompositionReport& r) {
    json j;
    j["sources"] = r.sources;
    j["interpretations"] = r.interpretations;
    j["terms"] = r.terms;
    j["proportions"] = r.proportions;
    j["total"] = r.total;
    return j.dump(2);
}

namespace {

std::string full_precision(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

std::string report_to_csv(const DecompositionReport& r) {
    std::string out = "source,interpretation,variance,proportion\n";
    for (std::size_t i = 0; i < r.terms.size(); ++i) {
        out += r.sources[i] + ",\"" + r.interpretations[i] + "\"," + full_precision(r.terms[i]) +
               ',' + full_precision(r.proportions[i]) + '\n';
    }
    out += "Total,Predictive variance," + full_precision(r.total) + ",1\n";
    return out;
}

}  // namespace panova::core
