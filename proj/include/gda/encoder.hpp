#pragma once

// GNN encoder family: aggregator kind x hop count x residual, followed by a
// linear classifier head.
//
//   H0 = relu(dropout(X) W0)
//   per hop l = 1..hops:
//     GcnSum     Z = Ahat H W_l                        (Ahat = D^-1/2 (A+I) D^-1/2)
//     Mean       Z = D^-1 A H W_l
//     Max        Z = (elementwise max over neighbors of H) W_l, empty -> 0
//     Attention  Z_i = sum_j alpha_ij W_l h_j over N(i) + self,
//                alpha = softmax_j leaky_relu_0.2(a . [W_l h_i || W_l h_j])
//     GinSum     Z = relu(((1+eps) h_i + sum_j h_j) W_l) U_l
//     H_l = relu(Z) (+ H_{l-1} when residual)
//   hops = 0 returns H0 (plain perceptron, adjacency unused).
//
// Dropout is applied to X and to the input of every hop in training mode only.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gda/error.hpp"
#include "gda/graph.hpp"
#include "gda/optim.hpp"
#include "gda/rng.hpp"
#include "gda/tape.hpp"

namespace gda {

enum class Aggregator { GcnSum, Mean, Max, Attention, GinSum };

inline std::string_view to_string(Aggregator a) {
    switch (a) {
        case Aggregator::GcnSum: return "gcn";
        case Aggregator::Mean: return "mean";
        case Aggregator::Max: return "max";
        case Aggregator::Attention: return "attention";
        case Aggregator::GinSum: return "gin";
    }
    return "?";
}

inline Aggregator parse_aggregator(std::string_view s) {
    for (Aggregator a : {Aggregator::GcnSum, Aggregator::Mean, Aggregator::Max, Aggregator::Attention,
                         Aggregator::GinSum})
        if (to_string(a) == s) return a;
    throw ConfigError("unknown aggregator '" + std::string(s) + "' (expected gcn, mean, max, attention or gin)");
}

struct EncoderConfig {
    Aggregator aggregator = Aggregator::GcnSum;
    int hops = 1;
    std::size_t hidden = 128;
    bool residual = false;
    double dropout = 0.5;
    std::size_t input_dim = 0;
    int num_classes = 0;

    void validate() const {
        if (hops < 0) throw ConfigError("hops must be nonnegative");
        if (hidden == 0) throw ConfigError("hidden width must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
        if (num_classes < 1) throw ConfigError("num_classes must be positive");
    }
};

inline constexpr double kAttentionSlope = 0.2;

/// Learnable encoder and classifier weights. Which per-hop vectors are populated
/// depends on the aggregator.
struct EncoderParams {
    Matrix input_proj;                 // d x hidden
    std::vector<Matrix> hop_weights;   // hidden x hidden per hop
    std::vector<Matrix> attention;     // 2*hidden x 1 per hop (Attention)
    std::vector<Matrix> gin_out;       // hidden x hidden per hop (GinSum second layer)
    std::vector<Matrix> gin_epsilon;   // 1 x 1 per hop (GinSum)
    Matrix classifier;                 // hidden x C
    Matrix classifier_bias;            // 1 x C

    /// Every parameter, in a fixed order shared with EncoderVars::tensors().
    ParamList params() {
        ParamList out;
        out.push_back({"encoder.W0", &input_proj});
        for (std::size_t l = 0; l < hop_weights.size(); ++l) {
            const std::string p = "encoder.hop" + std::to_string(l + 1) + ".";
            out.push_back({p + "W", &hop_weights[l]});
            if (l < attention.size()) out.push_back({p + "attention", &attention[l]});
            if (l < gin_out.size()) out.push_back({p + "gin_out", &gin_out[l]});
            if (l < gin_epsilon.size()) out.push_back({p + "epsilon", &gin_epsilon[l]});
        }
        out.push_back({"classifier.W", &classifier});
        out.push_back({"classifier.b", &classifier_bias});
        return out;
    }
};

/// Glorot-uniform matrix with limit sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Matrix m(fan_in, fan_out);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : m.data) v = rng.uniform(-limit, limit);
    return m;
}

inline EncoderParams init_params(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p;
    p.input_proj = glorot_uniform(cfg.input_dim, cfg.hidden, rng);
    for (int l = 0; l < cfg.hops; ++l) {
        p.hop_weights.push_back(glorot_uniform(cfg.hidden, cfg.hidden, rng));
        if (cfg.aggregator == Aggregator::Attention) p.attention.push_back(glorot_uniform(2 * cfg.hidden, 1, rng));
        if (cfg.aggregator == Aggregator::GinSum) {
            p.gin_out.push_back(glorot_uniform(cfg.hidden, cfg.hidden, rng));
            p.gin_epsilon.emplace_back(1, 1, 0.0);
        }
    }
    p.classifier = glorot_uniform(cfg.hidden, static_cast<std::size_t>(cfg.num_classes), rng);
    p.classifier_bias = Matrix(1, static_cast<std::size_t>(cfg.num_classes));
    return p;
}

inline EncoderParams init_params(const EncoderConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return init_params(cfg, rng);
}

/// EncoderParams placed on a tape.
struct EncoderVars {
    Tensor input_proj;
    std::vector<Tensor> hop_weights, attention, gin_out, gin_epsilon;
    Tensor classifier, classifier_bias;

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out{input_proj};
        for (std::size_t l = 0; l < hop_weights.size(); ++l) {
            out.push_back(hop_weights[l]);
            if (l < attention.size()) out.push_back(attention[l]);
            if (l < gin_out.size()) out.push_back(gin_out[l]);
            if (l < gin_epsilon.size()) out.push_back(gin_epsilon[l]);
        }
        out.push_back(classifier);
        out.push_back(classifier_bias);
        return out;
    }
};

inline EncoderVars bind(Tape& tape, const EncoderParams& p, bool trainable = true) {
    EncoderVars v;
    v.input_proj = tape.leaf(p.input_proj, trainable);
    for (std::size_t l = 0; l < p.hop_weights.size(); ++l) {
        v.hop_weights.push_back(tape.leaf(p.hop_weights[l], trainable));
        if (l < p.attention.size()) v.attention.push_back(tape.leaf(p.attention[l], trainable));
        if (l < p.gin_out.size()) v.gin_out.push_back(tape.leaf(p.gin_out[l], trainable));
        if (l < p.gin_epsilon.size()) v.gin_epsilon.push_back(tape.leaf(p.gin_epsilon[l], trainable));
    }
    v.classifier = tape.leaf(p.classifier, trainable);
    v.classifier_bias = tape.leaf(p.classifier_bias, trainable);
    return v;
}

/// Precomputed sparse operators of one graph.
struct GraphOperators {
    const SparseGraph* graph = nullptr;
    SparseMatrixRef gcn;        // D^-1/2 (A+I) D^-1/2
    SparseMatrixRef mean;       // D^-1 A
    SparseMatrixRef adjacency;  // A
    SparseMatrixRef with_self;  // structure of A + I
};

inline GraphOperators prepare(const SparseGraph& g) {
    return {&g, normalize_gcn(g), normalize_row(g, false), g.adjacency(), self_loop_structure(g)};
}

// ---------------------------------------------------------------------------
// Aggregation ops with hand-written backward passes
// ---------------------------------------------------------------------------

/// Per-column maximum over each row's neighbors; empty neighborhoods give zeros.
/// The gradient goes to the first (lowest-index) neighbor attaining the maximum.
inline Tensor max_aggregate(SparseMatrixRef structure, Tensor h) {
    const Matrix& hv = h.value();
    if (structure->cols != hv.rows) throw ShapeError("max_aggregate: structure/feature size mismatch");
    const std::size_t n = structure->rows, c = hv.cols;
    Matrix out(n, c);
    std::vector<std::uint32_t> argmax(n * c, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t b = structure->row_begin(i), e = structure->row_end(i);
        if (b == e) continue;
        for (std::size_t f = 0; f < c; ++f) {
            std::uint32_t best = structure->col_indices[b];
            double mx = hv(best, f);
            for (std::size_t k = b + 1; k < e; ++k) {
                const std::uint32_t j = structure->col_indices[k];
                if (hv(j, f) > mx) {
                    mx = hv(j, f);
                    best = j;
                }
            }
            out(i, f) = mx;
            argmax[i * c + f] = best;
        }
    }
    return h.tape().record(std::move(out), {h}, [h, structure, arg = std::move(argmax)](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(h);
        for (std::size_t i = 0; i < g.rows; ++i) {
            if (structure->row_begin(i) == structure->row_end(i)) continue;
            for (std::size_t f = 0; f < g.cols; ++f) (*acc)(arg[i * g.cols + f], f) += g(i, f);
        }
    });
}

namespace detail {

struct AttentionForward {
    std::vector<double> pre;    // pre-activation score per support slot
    std::vector<double> alpha;  // normalized weight per support slot
};

inline AttentionForward attention_scores(const CsrMatrix& support, const Matrix& wh, const Matrix& a, double slope) {
    const std::size_t h = wh.cols;
    if (a.rows != 2 * h || a.cols != 1) throw ShapeError("attention vector must be (2*hidden) x 1");
    std::vector<double> s(wh.rows), t(wh.rows);
    for (std::size_t i = 0; i < wh.rows; ++i) {
        double si = 0.0, ti = 0.0;
        for (std::size_t f = 0; f < h; ++f) {
            si += wh(i, f) * a.data[f];
            ti += wh(i, f) * a.data[h + f];
        }
        s[i] = si;
        t[i] = ti;
    }
    AttentionForward fw;
    fw.pre.resize(support.nnz());
    fw.alpha.resize(support.nnz());
    for (std::size_t i = 0; i < support.rows; ++i) {
        const std::size_t b = support.row_begin(i), e = support.row_end(i);
        if (b == e) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = b; k < e; ++k) {
            fw.pre[k] = s[i] + t[support.col_indices[k]];
            const double act = fw.pre[k] > 0 ? fw.pre[k] : slope * fw.pre[k];
            fw.alpha[k] = act;
            mx = std::max(mx, act);
        }
        double z = 0.0;
        for (std::size_t k = b; k < e; ++k) z += (fw.alpha[k] = std::exp(fw.alpha[k] - mx));
        for (std::size_t k = b; k < e; ++k) fw.alpha[k] /= z;
    }
    return fw;
}

}  // namespace detail

/// Attention weights alpha_ij laid out along the support's CSR slots.
inline std::vector<double> attention_weights(const CsrMatrix& support, const Matrix& wh, const Matrix& a,
                                             double slope = kAttentionSlope) {
    return detail::attention_scores(support, wh, a, slope).alpha;
}

/// Single-head attention aggregation: Z_i = sum_j alpha_ij Wh_j over the support row of i.
inline Tensor attention_aggregate(SparseMatrixRef support, Tensor wh, Tensor a, double slope = kAttentionSlope) {
    const Matrix& whv = wh.value();
    if (support->cols != whv.rows) throw ShapeError("attention_aggregate: support/feature size mismatch");
    detail::AttentionForward fw = detail::attention_scores(*support, whv, a.value(), slope);
    const std::size_t h = whv.cols;
    Matrix out(support->rows, h);
    for (std::size_t i = 0; i < support->rows; ++i)
        for (std::size_t k = support->row_begin(i); k < support->row_end(i); ++k) {
            auto src = whv.row(support->col_indices[k]);
            for (std::size_t f = 0; f < h; ++f) out(i, f) += fw.alpha[k] * src[f];
        }
    return wh.tape().record(std::move(out), {wh, a}, [support, wh, a, slope, fw = std::move(fw)](Tape& tp, const Matrix& g) {
        const Matrix& whv = wh.value();
        const Matrix& av = a.value();
        const std::size_t h = whv.cols;
        Matrix dwh(whv.rows, h);
        std::vector<double> ds(whv.rows, 0.0), dt(whv.rows, 0.0);
        std::vector<double> dalpha;
        for (std::size_t i = 0; i < support->rows; ++i) {
            const std::size_t b = support->row_begin(i), e = support->row_end(i);
            if (b == e) continue;
            auto gi = g.row(i);
            dalpha.assign(e - b, 0.0);
            double weighted = 0.0;
            for (std::size_t k = b; k < e; ++k) {
                const std::uint32_t j = support->col_indices[k];
                auto src = whv.row(j);
                double dot = 0.0;
                for (std::size_t f = 0; f < h; ++f) {
                    dot += gi[f] * src[f];
                    dwh(j, f) += fw.alpha[k] * gi[f];
                }
                dalpha[k - b] = dot;
                weighted += fw.alpha[k] * dot;
            }
            for (std::size_t k = b; k < e; ++k) {
                const double de = fw.alpha[k] * (dalpha[k - b] - weighted);
                const double dpre = de * (fw.pre[k] > 0 ? 1.0 : slope);
                ds[i] += dpre;
                dt[support->col_indices[k]] += dpre;
            }
        }
        Matrix da(2 * h, 1);
        for (std::size_t i = 0; i < whv.rows; ++i)
            for (std::size_t f = 0; f < h; ++f) {
                dwh(i, f) += ds[i] * av.data[f] + dt[i] * av.data[h + f];
                da.data[f] += ds[i] * whv(i, f);
                da.data[h + f] += dt[i] * whv(i, f);
            }
        tp.accumulate(wh, dwh);
        tp.accumulate(a, da);
    });
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// Node embeddings (n x hidden) for the given feature tensor.
inline Tensor encode(const GraphOperators& ops, Tensor features, const EncoderConfig& cfg, const EncoderVars& vars,
                     bool training, Rng& rng) {
    if (features.cols() != vars.input_proj.rows())
        throw ShapeError("encode: feature width " + std::to_string(features.cols()) + " differs from input_dim " +
                         std::to_string(vars.input_proj.rows()));
    if (vars.hop_weights.size() != static_cast<std::size_t>(cfg.hops))
        throw ShapeError("encode: parameters built for a different hop count");
    Tensor h = relu(matmul(dropout(features, cfg.dropout, rng, training), vars.input_proj));
    for (int l = 0; l < cfg.hops; ++l) {
        const std::size_t li = static_cast<std::size_t>(l);
        Tensor in = dropout(h, cfg.dropout, rng, training);
        Tensor z;
        switch (cfg.aggregator) {
            case Aggregator::GcnSum: z = matmul(spmm(ops.gcn, in), vars.hop_weights[li]); break;
            case Aggregator::Mean: z = matmul(spmm(ops.mean, in), vars.hop_weights[li]); break;
            case Aggregator::Max: z = matmul(max_aggregate(ops.adjacency, in), vars.hop_weights[li]); break;
            case Aggregator::Attention:
                z = attention_aggregate(ops.with_self, matmul(in, vars.hop_weights[li]), vars.attention.at(li));
                break;
            case Aggregator::GinSum: {
                Tensor pooled = add(spmm(ops.adjacency, in), add(in, scale_by(in, vars.gin_epsilon.at(li))));
                z = matmul(relu(matmul(pooled, vars.hop_weights[li])), vars.gin_out.at(li));
                break;
            }
        }
        h = cfg.residual ? add(relu(z), h) : relu(z);
    }
    return h;
}

inline Tensor encode(const GraphOperators& ops, const EncoderConfig& cfg, const EncoderVars& vars, bool training,
                     Rng& rng) {
    Tensor x = vars.input_proj.tape().constant(ops.graph->features);
    return encode(ops, x, cfg, vars, training, rng);
}

/// logits = H W_c + b_c
inline Tensor classify(Tensor h, const EncoderVars& vars) {
    if (h.cols() != vars.classifier.rows())
        throw ShapeError("classify: embedding width " + std::to_string(h.cols()) + " differs from classifier input " +
                         std::to_string(vars.classifier.rows()));
    return add_bias(matmul(h, vars.classifier), vars.classifier_bias);
}

/// Mean over rows of -log softmax(logits)[label].
inline Tensor cross_entropy_loss(Tensor logits, std::span<const int> labels) {
    const std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n) throw ValidationError("cross_entropy_loss: label count differs from logit rows");
    if (n == 0) throw ValidationError("cross_entropy_loss: no rows");
    Matrix pick(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw ValidationError("cross_entropy_loss: label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(c) + ")");
        pick(i, static_cast<std::size_t>(labels[i])) = -1.0 / static_cast<double>(n);
    }
    Tape& tp = logits.tape();
    return sum(hadamard(row_log_softmax(logits), tp.constant(std::move(pick))));
}

}  // namespace gda
