#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "gda/error.hpp"
#include "gda/graph.hpp"
#include "gda/rng.hpp"

namespace gda {

/// Contextual stochastic block model settings. The graph has n_per_class * C nodes,
/// split across classes according to class_priors.
struct CsbmParams {
    std::size_t n_per_class = 100;
    double p_intra = 0.1;
    double p_inter = 0.01;
    Matrix class_means;  // C x d; C is taken from its row count
    double sigma = 1.0;
    std::vector<double> class_priors;  // empty means uniform
    std::uint64_t seed = 0;

    int num_classes() const { return static_cast<int>(class_means.rows); }
};

/// Largest-remainder apportionment of total into counts proportional to priors.
/// Ties in the fractional part go to the lower class index.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& priors) {
    const std::size_t c = priors.size();
    std::vector<std::size_t> counts(c);
    std::vector<std::pair<double, std::size_t>> remainders(c);
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < c; ++k) {
        const double quota = static_cast<double>(total) * priors[k];
        counts[k] = static_cast<std::size_t>(std::floor(quota));
        assigned += counts[k];
        remainders[k] = {quota - std::floor(quota), k};
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[remainders[r % c].second];
    return counts;
}

/// Samples an undirected CSBM graph. Nodes are laid out in class blocks
/// (class 0 first). Edge (i, j), i < j, appears with probability p_intra when
/// the classes match and p_inter otherwise; features are the class mean plus
/// independent N(0, sigma^2) noise. Bit-reproducible per seed.
inline SparseGraph gen_csbm(const CsbmParams& p) {
    const std::size_t c = p.class_means.rows;
    if (c == 0) throw ConfigError("csbm: class_means must have at least one row");
    auto is_prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!is_prob(p.p_intra) || !is_prob(p.p_inter)) throw ConfigError("csbm: edge probabilities must lie in [0, 1]");
    if (!(p.sigma > 0)) throw ConfigError("csbm: sigma must be positive");
    std::vector<double> priors = p.class_priors;
    if (priors.empty()) priors.assign(c, 1.0 / static_cast<double>(c));
    if (priors.size() != c) throw ConfigError("csbm: class_priors length differs from class count");
    double total_prior = 0.0;
    for (double v : priors) {
        if (!(v >= 0.0)) throw ConfigError("csbm: class priors must be nonnegative");
        total_prior += v;
    }
    if (std::abs(total_prior - 1.0) > 1e-9) throw ConfigError("csbm: class priors must sum to 1");

    const std::size_t n = p.n_per_class * c;
    const auto counts = apportion(n, priors);
    std::vector<int> labels;
    labels.reserve(n);
    for (std::size_t k = 0; k < c; ++k) labels.insert(labels.end(), counts[k], static_cast<int>(k));

    Rng edge_rng = Rng::derive(p.seed, 0);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double prob = labels[i] == labels[j] ? p.p_intra : p.p_inter;
            if (edge_rng.bernoulli(prob)) edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
        }

    Rng feat_rng = Rng::derive(p.seed, 1);
    const std::size_t d = p.class_means.cols;
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < d; ++f)
            x(i, f) = p.class_means(static_cast<std::size_t>(labels[i]), f) + p.sigma * feat_rng.normal();

    return SparseGraph::from_edges(n, edges, /*directed=*/false, std::move(x), std::move(labels), static_cast<int>(c));
}

}  // namespace gda
