#pragma once

// Unsupervised objectives on the unlabeled target graph: information
// maximization (IM), graph autoencoder link reconstruction (AE), and
// attribute-masking contrastive learning with NT-Xent (CL).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gda/encoder.hpp"
#include "gda/error.hpp"
#include "gda/graph.hpp"
#include "gda/optim.hpp"
#include "gda/rng.hpp"
#include "gda/tape.hpp"

namespace gda {

enum class UnsupKind { None, Im, Ae, Cl };

struct UnsupConfig {
    UnsupKind kind = UnsupKind::None;
    double beta = 0.0;
    double decoder_dropout = 0.1;
    std::size_t neg_ratio = 1;
    double mask_prob = 0.1;
    double temperature = 0.1;
    std::size_t proj_dim = 128;

    void validate() const {
        if (!(beta >= 0)) throw ConfigError("beta must be nonnegative");
        if (!(temperature > 0)) throw ConfigError("temperature must be positive");
        if (!(mask_prob >= 0 && mask_prob < 1)) throw ConfigError("mask_prob must lie in [0, 1)");
        if (!(decoder_dropout >= 0 && decoder_dropout < 1)) throw ConfigError("decoder_dropout must lie in [0, 1)");
        if (neg_ratio < 1) throw ConfigError("neg_ratio must be at least 1");
        if (proj_dim == 0) throw ConfigError("proj_dim must be positive");
    }
};

// ---------------------------------------------------------------------------
// Information maximization
// ---------------------------------------------------------------------------

/// mean_i H(p_i) - H(mean_i p_i) with p_i = softmax(logits_i), natural log.
/// Lies in [-ln C, ln C]; minimized by confident, class-balanced predictions.
inline Tensor im_loss(Tensor logits) {
    const Matrix& z = logits.value();
    const std::size_t n = z.rows, c = z.cols;
    if (n == 0) throw ValidationError("im_loss: no rows");
    Matrix p(n, c), logp(n, c);
    std::vector<double> row_entropy(n, 0.0);
    std::vector<double> marginal(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto zi = z.row(i);
        const double mx = *std::max_element(zi.begin(), zi.end());
        double s = 0.0;
        for (double v : zi) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        for (std::size_t k = 0; k < c; ++k) {
            logp(i, k) = zi[k] - lse;
            p(i, k) = std::exp(logp(i, k));
            row_entropy[i] -= p(i, k) * logp(i, k);
            marginal[k] += p(i, k);
        }
    }
    double mean_entropy = 0.0;
    for (double h : row_entropy) mean_entropy += h;
    mean_entropy /= static_cast<double>(n);
    double marginal_entropy = 0.0;
    for (double& m : marginal) {
        m /= static_cast<double>(n);
        if (m > 0) marginal_entropy -= m * std::log(m);
    }
    Matrix out(1, 1, mean_entropy - marginal_entropy);
    return logits.tape().record(
        std::move(out), {logits},
        [logits, p = std::move(p), logp = std::move(logp), row_entropy = std::move(row_entropy),
         marginal = std::move(marginal)](Tape& tp, const Matrix& g) {
            const std::size_t n = p.rows, c = p.cols;
            const double inv_n = 1.0 / static_cast<double>(n);
            // dH(pbar)/dpbar_k = -(log pbar_k + 1); classes with pbar_k = 0 carry no mass.
            std::vector<double> gm(c, 0.0);
            for (std::size_t k = 0; k < c; ++k) gm[k] = marginal[k] > 0 ? -(std::log(marginal[k]) + 1.0) : 0.0;
            Matrix* acc = tp.accumulator(logits);
            for (std::size_t i = 0; i < n; ++i) {
                double pg = 0.0;
                for (std::size_t k = 0; k < c; ++k) pg += p(i, k) * gm[k];
                for (std::size_t k = 0; k < c; ++k) {
                    const double d_row = -p(i, k) * (logp(i, k) + row_entropy[i]);
                    const double d_marg = p(i, k) * (gm[k] - pg);
                    (*acc)(i, k) += g.data[0] * inv_n * (d_row - d_marg);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Graph autoencoder
// ---------------------------------------------------------------------------

struct NodePair {
    std::uint32_t src;
    std::uint32_t dst;
};

/// Inner products z_src . z_dst for each pair, as a k x 1 column.
inline Tensor pair_dot(Tensor z, std::vector<NodePair> pairs) {
    const Matrix& zv = z.value();
    Matrix out(pairs.size(), 1);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (pairs[k].src >= zv.rows || pairs[k].dst >= zv.rows) throw ShapeError("pair_dot: node index out of range");
        auto a = zv.row(pairs[k].src);
        auto b = zv.row(pairs[k].dst);
        double s = 0.0;
        for (std::size_t f = 0; f < zv.cols; ++f) s += a[f] * b[f];
        out.data[k] = s;
    }
    return z.tape().record(std::move(out), {z}, [z, pairs = std::move(pairs)](Tape& tp, const Matrix& g) {
        const Matrix& zv = z.value();
        Matrix* acc = tp.accumulator(z);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double gk = g.data[k];
            auto a = zv.row(pairs[k].src);
            auto b = zv.row(pairs[k].dst);
            auto da = acc->row(pairs[k].src);
            for (std::size_t f = 0; f < zv.cols; ++f) da[f] += gk * b[f];
            auto db = acc->row(pairs[k].dst);
            for (std::size_t f = 0; f < zv.cols; ++f) db[f] += gk * a[f];
        }
    });
}

/// Mean binary cross-entropy of the inner-product decoder sigmoid(z_i . z_j):
/// label 1 for positives, 0 for negatives.
inline Tensor link_bce(Tensor z, std::vector<NodePair> positives, std::vector<NodePair> negatives) {
    const std::size_t total = positives.size() + negatives.size();
    if (total == 0) throw ValidationError("link_bce: no pairs to score");
    Tape& tp = z.tape();
    Tensor acc = tp.constant(Matrix(1, 1));
    if (!positives.empty()) acc = add(acc, sum(softplus(neg(pair_dot(z, std::move(positives))))));
    if (!negatives.empty()) acc = add(acc, sum(softplus(pair_dot(z, std::move(negatives)))));
    return scale(acc, 1.0 / static_cast<double>(total));
}

/// Uniformly sampled ordered pairs (u, v), u != v, with no stored edge u -> v.
inline std::vector<NodePair> sample_non_edges(const SparseGraph& g, std::size_t count, Rng& rng) {
    std::vector<NodePair> out;
    out.reserve(count);
    if (count == 0) return out;
    if (g.n < 2) throw ValidationError("negative sampling needs at least two nodes");
    const std::size_t max_attempts = 100 * count + 1000;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > max_attempts)
            throw ValidationError("negative sampling failed: graph has too few non-adjacent pairs");
        const auto u = static_cast<std::uint32_t>(rng.below(g.n));
        const auto v = static_cast<std::uint32_t>(rng.below(g.n));
        if (u == v || g.has_edge(u, v)) continue;
        out.push_back({u, v});
    }
    return out;
}

/// Link-reconstruction loss on the target graph: every stored edge slot as a
/// positive plus neg_ratio * m sampled non-edges, scored after decoder dropout.
inline Tensor ae_loss(Tensor z, const SparseGraph& g, std::size_t neg_ratio, double decoder_dropout, Rng& rng,
                      bool training) {
    if (g.m() == 0) throw ValidationError("ae_loss: graph has no edges to reconstruct");
    if (neg_ratio < 1) throw ConfigError("ae_loss: neg_ratio must be at least 1");
    if (z.rows() != g.n) throw ShapeError("ae_loss: embedding rows differ from node count");
    std::vector<NodePair> positives;
    positives.reserve(g.m());
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::uint32_t j : g.neighbors(i)) positives.push_back({static_cast<std::uint32_t>(i), j});
    std::vector<NodePair> negatives = sample_non_edges(g, neg_ratio * g.m(), rng);
    Tensor zd = dropout(z, decoder_dropout, rng, training);
    return link_bce(zd, std::move(positives), std::move(negatives));
}

// ---------------------------------------------------------------------------
// Contrastive learning
// ---------------------------------------------------------------------------

/// Zeroes each feature column independently with probability mask_prob (no rescaling).
inline Matrix augment_mask(const Matrix& x, double mask_prob, Rng& rng) {
    if (!(mask_prob >= 0 && mask_prob < 1)) throw ConfigError("mask_prob must lie in [0, 1)");
    Matrix out = x;
    if (mask_prob == 0) return out;
    for (std::size_t c = 0; c < x.cols; ++c) {
        if (!rng.bernoulli(mask_prob)) continue;
        for (std::size_t i = 0; i < x.rows; ++i) out(i, c) = 0.0;
    }
    return out;
}

/// NT-Xent over the 2n pooled views. Rows are L2-normalized internally; each
/// anchor's positive is its counterpart in the other view and its denominator
/// runs over the other 2n - 1 rows.
inline Tensor nt_xent(Tensor z1, Tensor z2, double temperature) {
    if (!(temperature > 0)) throw ConfigError("nt_xent: temperature must be positive");
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("nt_xent: views differ in shape");
    const std::size_t n = z1.rows();
    if (n < 2) throw ValidationError("nt_xent: need at least two rows per view");
    Tensor u1 = l2_normalize_rows(z1);
    Tensor u2 = l2_normalize_rows(z2);
    const Matrix& a = u1.value();
    const Matrix& b = u2.value();
    const std::size_t m = 2 * n, p = a.cols;
    Matrix pooled(m, p);
    std::copy(a.data.begin(), a.data.end(), pooled.data.begin());
    std::copy(b.data.begin(), b.data.end(), pooled.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    Matrix sim = gemm(pooled, false, pooled, true);
    const double inv_t = 1.0 / temperature;
    Matrix q(m, m);  // softmax over b != a of sim/t
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t pos = i < n ? i + n : i - n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) mx = std::max(mx, sim(i, j) * inv_t);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) z += (q(i, j) = std::exp(sim(i, j) * inv_t - mx));
        for (std::size_t j = 0; j < m; ++j) q(i, j) /= z;
        total += -(sim(i, pos) * inv_t) + mx + std::log(z);
    }
    Matrix out(1, 1, total / static_cast<double>(m));
    return u1.tape().record(
        std::move(out), {u1, u2},
        [u1, u2, n, inv_t, q = std::move(q), pooled = std::move(pooled)](Tape& tp, const Matrix& g) {
            const std::size_t m = 2 * n;
            const double w = g.data[0] / static_cast<double>(m);
            Matrix ds(m, m);  // dL/dS, then symmetrized
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t pos = i < n ? i + n : i - n;
                for (std::size_t j = 0; j < m; ++j)
                    if (j != i) ds(i, j) = w * inv_t * (q(i, j) - (j == pos ? 1.0 : 0.0));
            }
            Matrix sym(m, m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j) sym(i, j) = ds(i, j) + ds(j, i);
            Matrix dp = gemm(sym, false, pooled, false);
            Matrix d1(n, pooled.cols), d2(n, pooled.cols);
            std::copy(dp.data.begin(), dp.data.begin() + static_cast<std::ptrdiff_t>(d1.size()), d1.data.begin());
            std::copy(dp.data.begin() + static_cast<std::ptrdiff_t>(d1.size()), dp.data.end(), d2.data.begin());
            tp.accumulate(u1, d1);
            tp.accumulate(u2, d2);
        });
}

/// Projection head hidden -> proj_dim, no activation.
struct ProjectionParams {
    Matrix w, b;

    ParamList params() { return {{"proj.W", &w}, {"proj.b", &b}}; }
};

inline ProjectionParams init_projection(std::size_t hidden, std::size_t proj_dim, Rng& rng) {
    // The bias starts random so an all-zero embedding row still projects to a nonzero vector.
    return {glorot_uniform(hidden, proj_dim, rng), glorot_uniform(1, proj_dim, rng)};
}

struct ProjectionVars {
    Tensor w, b;
    std::vector<Tensor> tensors() const { return {w, b}; }
};

inline ProjectionVars bind(Tape& tape, const ProjectionParams& p, bool trainable = true) {
    return {tape.leaf(p.w, trainable), tape.leaf(p.b, trainable)};
}

inline Tensor project(Tensor h, const ProjectionVars& proj) { return add_bias(matmul(h, proj.w), proj.b); }

/// Two independent attribute-masked views of the target features, encoded with
/// shared parameters over the unmodified adjacency, projected, and contrasted.
inline Tensor cl_loss(const GraphOperators& target, const UnsupConfig& cfg, const EncoderConfig& enc_cfg,
                      const EncoderVars& enc, const ProjectionVars& proj, bool training, Rng& augment_rng,
                      Rng& dropout_rng) {
    Tape& tp = enc.input_proj.tape();
    const Matrix& x = target.graph->features;
    Tensor x1 = tp.constant(augment_mask(x, cfg.mask_prob, augment_rng));
    Tensor x2 = tp.constant(augment_mask(x, cfg.mask_prob, augment_rng));
    Tensor h1 = encode(target, x1, enc_cfg, enc, training, dropout_rng);
    Tensor h2 = encode(target, x2, enc_cfg, enc, training, dropout_rng);
    return nt_xent(project(h1, proj), project(h2, proj), cfg.temperature);
}

}  // namespace gda
