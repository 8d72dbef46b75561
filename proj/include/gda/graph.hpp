#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gda/error.hpp"
#include "gda/matrix.hpp"

namespace gda {

/// Attributed, labeled graph in CSR form. Immutable once built by from_edges().
struct SparseGraph {
    std::size_t n = 0;
    bool directed = false;
    std::vector<std::size_t> row_offsets{0};
    std::vector<std::uint32_t> col_indices;
    std::vector<double> weights;
    Matrix features;          // n x d
    std::vector<int> labels;  // -1 marks an unlabeled node
    int num_classes = 0;

    std::size_t m() const noexcept { return col_indices.size(); }
    std::size_t d() const noexcept { return features.cols; }

    std::span<const std::uint32_t> neighbors(std::size_t i) const {
        return {col_indices.data() + row_offsets[i], row_offsets[i + 1] - row_offsets[i]};
    }
    std::size_t degree(std::size_t i) const { return row_offsets[i + 1] - row_offsets[i]; }

    bool has_edge(std::size_t i, std::size_t j) const {
        auto nb = neighbors(i);
        return std::binary_search(nb.begin(), nb.end(), static_cast<std::uint32_t>(j));
    }

    /// Builds a graph from an edge list. Undirected input is symmetrized; duplicate
    /// edges collapse to one slot of weight 1.
    static SparseGraph from_edges(std::size_t n, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges,
                                  bool directed, Matrix features, std::vector<int> labels, int num_classes) {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> all(edges.begin(), edges.end());
        if (!directed) {
            all.reserve(2 * edges.size());
            for (auto [u, v] : edges)
                if (u != v) all.emplace_back(v, u);
        }
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());

        SparseGraph g;
        g.n = n;
        g.directed = directed;
        g.row_offsets.assign(n + 1, 0);
        for (auto [u, v] : all) {
            if (u >= n || v >= n)
                throw ValidationError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                      ") references a node outside [0, " + std::to_string(n) + ")");
            ++g.row_offsets[u + 1];
        }
        std::partial_sum(g.row_offsets.begin(), g.row_offsets.end(), g.row_offsets.begin());
        g.col_indices.reserve(all.size());
        for (auto [u, v] : all) g.col_indices.push_back(v);
        g.weights.assign(all.size(), 1.0);
        g.features = std::move(features);
        g.labels = std::move(labels);
        g.num_classes = num_classes;
        g.validate();
        return g;
    }

    void validate() const {
        if (row_offsets.size() != n + 1 || row_offsets.front() != 0 || row_offsets.back() != col_indices.size())
            throw ValidationError("row offsets inconsistent with edge count");
        if (weights.size() != col_indices.size()) throw ValidationError("weights length differs from edge count");
        for (std::size_t i = 0; i < n; ++i) {
            if (row_offsets[i] > row_offsets[i + 1]) throw ValidationError("row offsets decreasing");
            for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
                if (col_indices[k] >= n) throw ValidationError("column index out of range in row " + std::to_string(i));
                if (k > row_offsets[i] && col_indices[k] <= col_indices[k - 1])
                    throw ValidationError("duplicate or unsorted edge in row " + std::to_string(i));
            }
        }
        if (features.rows != n) throw ValidationError("feature rows differ from node count");
        if (!features.all_finite()) throw ValidationError("non-finite feature value");
        if (labels.size() != n) throw ValidationError("label count differs from node count");
        if (num_classes < 0) throw ValidationError("negative class count");
        for (int y : labels)
            if (y < -1 || y >= num_classes) throw ValidationError("label " + std::to_string(y) + " out of range");
        if (!directed) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::uint32_t j : neighbors(i))
                    if (!has_edge(j, i)) throw ValidationError("undirected graph is not symmetric");
        }
    }

    /// Raw weighted adjacency as a CSR operator.
    SparseMatrixRef adjacency() const {
        auto a = std::make_shared<CsrMatrix>();
        a->rows = a->cols = n;
        a->row_offsets = row_offsets;
        a->col_indices = col_indices;
        a->values = weights;
        return a;
    }

    /// Copy with every label replaced by -1.
    SparseGraph without_labels() const {
        SparseGraph g = *this;
        std::fill(g.labels.begin(), g.labels.end(), -1);
        return g;
    }
};

/// Relabels node i as perm[i]. Used for invariance checks.
inline SparseGraph permute_nodes(const SparseGraph& g, std::span<const std::size_t> perm) {
    if (perm.size() != g.n) throw ShapeError("permutation length differs from node count");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    edges.reserve(g.m());
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::uint32_t j : g.neighbors(i))
            edges.emplace_back(static_cast<std::uint32_t>(perm[i]), static_cast<std::uint32_t>(perm[j]));
    Matrix x(g.n, g.d());
    std::vector<int> y(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        std::copy(g.features.row(i).begin(), g.features.row(i).end(), x.row(perm[i]).begin());
        y[perm[i]] = g.labels[i];
    }
    SparseGraph out = SparseGraph::from_edges(g.n, edges, /*directed=*/true, std::move(x), std::move(y), g.num_classes);
    out.directed = g.directed;
    return out;
}

// ---------------------------------------------------------------------------
// Domain pairs and the target-label firewall
// ---------------------------------------------------------------------------

class TargetEvaluation;
class ShiftMeasurement;

/// Target-domain labels held out from training. Only the evaluation and
/// shift-measurement gates can read them; training code has no accessor.
class HeldOutLabels {
public:
    HeldOutLabels() = default;
    explicit HeldOutLabels(std::vector<int> labels) : labels_(std::move(labels)) {}

    std::size_t size() const noexcept { return labels_.size(); }

private:
    friend class TargetEvaluation;
    friend class ShiftMeasurement;

    const std::vector<int>& reveal() const noexcept { return labels_; }

    std::vector<int> labels_;
};

/// Labeled source graph plus an unlabeled target graph. The target graph's
/// label vector is all -1; the true labels live in target_truth.
struct DomainPair {
    SparseGraph source;
    SparseGraph target;
    HeldOutLabels target_truth;

    /// Splits the target's labels off into the held-out store and validates the pair.
    static DomainPair make(SparseGraph source, SparseGraph target_with_labels) {
        DomainPair p;
        p.target_truth = HeldOutLabels(target_with_labels.labels);
        p.target = target_with_labels.without_labels();
        p.source = std::move(source);
        p.validate();
        return p;
    }

    void validate() const {
        if (source.d() != target.d())
            throw ValidationError("source and target feature dimensions differ (" + std::to_string(source.d()) +
                                  " vs " + std::to_string(target.d()) + ")");
        if (source.num_classes != target.num_classes) throw ValidationError("source and target class counts differ");
        for (std::size_t i = 0; i < source.n; ++i)
            if (source.labels[i] < 0)
                throw ValidationError("source node " + std::to_string(i) + " is unlabeled");
        if (target_truth.size() != target.n) throw ValidationError("held-out label count differs from target size");
    }
};

// ---------------------------------------------------------------------------
// Adjacency normalizations
// ---------------------------------------------------------------------------

namespace detail {

// A with every diagonal entry forced to weight 1 (one self-loop per node).
inline CsrMatrix with_unit_self_loops(const SparseGraph& g) {
    CsrMatrix a;
    a.rows = a.cols = g.n;
    a.row_offsets.assign(1, 0);
    a.col_indices.reserve(g.m() + g.n);
    a.values.reserve(g.m() + g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        bool placed = false;
        for (std::size_t k = g.row_offsets[i]; k < g.row_offsets[i + 1]; ++k) {
            const std::uint32_t j = g.col_indices[k];
            if (!placed && j >= i) {
                a.col_indices.push_back(static_cast<std::uint32_t>(i));
                a.values.push_back(1.0);
                placed = true;
                if (j == i) continue;
            }
            a.col_indices.push_back(j);
            a.values.push_back(g.weights[k]);
        }
        if (!placed) {
            a.col_indices.push_back(static_cast<std::uint32_t>(i));
            a.values.push_back(1.0);
        }
        a.row_offsets.push_back(a.col_indices.size());
    }
    return a;
}

inline CsrMatrix plain_adjacency(const SparseGraph& g) {
    CsrMatrix a;
    a.rows = a.cols = g.n;
    a.row_offsets = g.row_offsets;
    a.col_indices = g.col_indices;
    a.values = g.weights;
    return a;
}

}  // namespace detail

/// Symmetric GCN operator D^-1/2 (A + I) D^-1/2, degrees taken from A + I.
/// Existing self-loops are replaced so each node carries exactly one of weight 1.
inline SparseMatrixRef normalize_gcn(const SparseGraph& g) {
    auto a = std::make_shared<CsrMatrix>(detail::with_unit_self_loops(g));
    std::vector<double> deg(g.n, 0.0);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t k = a->row_begin(i); k < a->row_end(i); ++k) deg[i] += a->values[k];
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t k = a->row_begin(i); k < a->row_end(i); ++k)
            a->values[k] /= std::sqrt(deg[i] * deg[a->col_indices[k]]);
    return a;
}

/// Row-stochastic operator D^-1 A (or over A + I when include_self). Empty rows stay empty.
inline SparseMatrixRef normalize_row(const SparseGraph& g, bool include_self) {
    auto a = std::make_shared<CsrMatrix>(include_self ? detail::with_unit_self_loops(g) : detail::plain_adjacency(g));
    for (std::size_t i = 0; i < g.n; ++i) {
        double total = 0.0;
        for (std::size_t k = a->row_begin(i); k < a->row_end(i); ++k) total += a->values[k];
        if (total == 0.0) continue;
        for (std::size_t k = a->row_begin(i); k < a->row_end(i); ++k) a->values[k] /= total;
    }
    return a;
}

/// Neighbors plus self, unit weights. Support set for attention aggregation.
inline SparseMatrixRef self_loop_structure(const SparseGraph& g) {
    auto a = std::make_shared<CsrMatrix>(detail::with_unit_self_loops(g));
    std::fill(a->values.begin(), a->values.end(), 1.0);
    return a;
}

// ---------------------------------------------------------------------------
// Descriptive statistics
// ---------------------------------------------------------------------------

/// Fraction of stored edge slots whose endpoints share a label. Self-loops and
/// slots touching an unlabeled node are not counted.
inline double edge_homophily(const SparseGraph& g) {
    std::size_t same = 0, counted = 0;
    for (std::size_t i = 0; i < g.n; ++i) {
        if (g.labels[i] < 0) continue;
        for (std::uint32_t j : g.neighbors(i)) {
            if (j == i || g.labels[j] < 0) continue;
            ++counted;
            if (g.labels[j] == g.labels[i]) ++same;
        }
    }
    if (counted == 0) throw UndefinedStatistic("edge homophily undefined: no countable edges");
    return static_cast<double>(same) / static_cast<double>(counted);
}

struct DegreeStats {
    double avg_degree = 0.0;
    std::vector<std::size_t> histogram;  // histogram[k] = number of nodes with k stored slots
};

/// Average degree counts stored (directed) slots over n: an undirected edge contributes 2.
inline DegreeStats degree_stats(const SparseGraph& g) {
    if (g.n == 0) throw ValidationError("degree statistics of an empty graph");
    DegreeStats s;
    s.avg_degree = static_cast<double>(g.m()) / static_cast<double>(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        const std::size_t k = g.degree(i);
        if (k >= s.histogram.size()) s.histogram.resize(k + 1, 0);
        ++s.histogram[k];
    }
    return s;
}

}  // namespace gda
