#pragma once

// Full-batch SimGDA / SimGDA+ training:
//
//   L = CE(classify(H_s), y_s) + alpha * L_align(H_s, H_t) + beta * L_unsup(target)
//
// one SGD step per epoch, final-epoch parameters kept.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gda/align.hpp"
#include "gda/encoder.hpp"
#include "gda/error.hpp"
#include "gda/graph.hpp"
#include "gda/metrics.hpp"
#include "gda/optim.hpp"
#include "gda/rng.hpp"
#include "gda/tape.hpp"
#include "gda/unsup.hpp"

namespace gda {

/// Independent random streams of one run.
struct RngStreams {
    Rng init;
    Rng dropout;
    Rng augment;
    Rng sampling;
};

inline RngStreams set_seed(std::uint64_t seed) {
    return {Rng::derive(seed, 100), Rng::derive(seed, 101), Rng::derive(seed, 102), Rng::derive(seed, 103)};
}

struct OptimConfig {
    double lr = 0.001;
    double weight_decay = 0.0005;
    double momentum = 0.99;
    int epochs = 200;
};

struct ExperimentConfig {
    EncoderConfig encoder;
    AlignmentConfig align;
    UnsupConfig unsup;
    OptimConfig optim;
    std::uint64_t seed = 0;
    int repeats = 1;

    /// Checks everything except the data-derived encoder fields (input_dim, num_classes).
    void validate() const {
        EncoderConfig e = encoder;
        e.num_classes = std::max(e.num_classes, 1);
        e.validate();
        align.validate();
        unsup.validate();
        if (optim.epochs < 1) throw ConfigError("epochs must be at least 1");
        if (repeats < 1) throw ConfigError("repeats must be at least 1");
        SgdState probe;
        sgd_step({}, {}, {optim.lr, optim.weight_decay, optim.momentum}, probe);
    }
};

/// Loss terms of one epoch, before weighting. total = ce + alpha align + beta unsup.
struct EpochLoss {
    double total = 0.0;
    double ce = 0.0;
    double align = 0.0;
    double unsup = 0.0;
};

struct RunResult {
    Metrics metrics;
    std::vector<EpochLoss> history;
    double runtime_seconds = 0.0;
    std::uint64_t seed = 0;
};

/// Trained weights plus the encoder layout they belong to.
struct Model {
    EncoderConfig encoder_config;
    EncoderParams encoder;
    std::optional<DiscriminatorParams> discriminator;
    std::optional<ProjectionParams> projection;

    ParamList params() {
        ParamList out = encoder.params();
        if (discriminator)
            for (auto& p : discriminator->params()) out.push_back(p);
        if (projection)
            for (auto& p : projection->params()) out.push_back(p);
        return out;
    }
};

struct TrainOutput {
    Model model;
    RunResult result;
};

/// Encoder configuration completed with the data's dimensions.
inline EncoderConfig resolve_encoder(EncoderConfig cfg, const SparseGraph& g) {
    if (cfg.input_dim != 0 && cfg.input_dim != g.d())
        throw ConfigError("encoder input_dim " + std::to_string(cfg.input_dim) + " differs from feature width " +
                          std::to_string(g.d()));
    if (cfg.num_classes != 0 && cfg.num_classes != g.num_classes)
        throw ConfigError("encoder num_classes differs from the data");
    cfg.input_dim = g.d();
    cfg.num_classes = g.num_classes;
    cfg.validate();
    return cfg;
}

/// The training loop. It receives only the labeled source graph and the
/// unlabeled target graph; target labels are never an input.
inline TrainOutput train_model(const SparseGraph& source, const SparseGraph& target, const ExperimentConfig& cfg) {
    cfg.validate();
    if (source.d() != target.d()) throw ValidationError("source and target feature dimensions differ");
    if (source.num_classes != target.num_classes) throw ValidationError("source and target class counts differ");
    const auto start = std::chrono::steady_clock::now();

    const EncoderConfig enc = resolve_encoder(cfg.encoder, source);
    RngStreams rng = set_seed(cfg.seed);

    Model model;
    model.encoder_config = enc;
    model.encoder = init_params(enc, rng.init);
    if (cfg.align.kind == AlignKind::Adversarial)
        model.discriminator = init_discriminator(enc.hidden, cfg.align.disc_hidden, rng.init);
    if (cfg.unsup.kind == UnsupKind::Cl) model.projection = init_projection(enc.hidden, cfg.unsup.proj_dim, rng.init);

    const GraphOperators ops_s = prepare(source);
    const GraphOperators ops_t = prepare(target);
    const SgdOptions sgd{cfg.optim.lr, cfg.optim.weight_decay, cfg.optim.momentum};
    SgdState state;
    ParamList named = model.params();
    std::vector<Matrix*> slots;
    for (auto& p : named) slots.push_back(p.value);

    RunResult result;
    result.seed = cfg.seed;
    result.history.reserve(static_cast<std::size_t>(cfg.optim.epochs));

    for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
        Tape tape;
        EncoderVars ev = bind(tape, model.encoder);
        std::vector<Tensor> leaves = ev.tensors();
        std::optional<DiscriminatorVars> dv;
        std::optional<ProjectionVars> pv;
        if (model.discriminator) {
            dv = bind(tape, *model.discriminator);
            for (Tensor t : dv->tensors()) leaves.push_back(t);
        }
        if (model.projection) {
            pv = bind(tape, *model.projection);
            leaves.push_back(pv->w);
            leaves.push_back(pv->b);
        }

        Tensor hs = encode(ops_s, enc, ev, true, rng.dropout);
        Tensor ht = encode(ops_t, enc, ev, true, rng.dropout);
        Tensor ce = cross_entropy_loss(classify(hs, ev), source.labels);
        Tensor total = ce;
        EpochLoss rec;
        rec.ce = ce.item();

        std::optional<Tensor> align_term;
        switch (cfg.align.kind) {
            case AlignKind::None: break;
            case AlignKind::Mmd: align_term = mmd_loss_median(hs, ht, cfg.align.bandwidth_scales); break;
            case AlignKind::Adversarial: {
                const double lambda =
                    lambda_at(epoch, cfg.optim.epochs, cfg.align.lambda_schedule, cfg.align.lambda_max);
                align_term = adversarial_loss(hs, ht, *dv, lambda);
                break;
            }
        }
        if (align_term) {
            rec.align = align_term->item();
            if (cfg.align.alpha != 0.0) total = add(total, scale(*align_term, cfg.align.alpha));
        }

        std::optional<Tensor> unsup_term;
        switch (cfg.unsup.kind) {
            case UnsupKind::None: break;
            case UnsupKind::Im: unsup_term = im_loss(classify(ht, ev)); break;
            case UnsupKind::Ae:
                unsup_term = ae_loss(ht, target, cfg.unsup.neg_ratio, cfg.unsup.decoder_dropout, rng.sampling, true);
                break;
            case UnsupKind::Cl:
                // The views' dropout comes from the augmentation stream so the main
                // dropout sequence is the same whatever the unsupervised term.
                unsup_term = cl_loss(ops_t, cfg.unsup, enc, ev, *pv, true, rng.augment, rng.augment);
                break;
        }
        if (unsup_term) {
            rec.unsup = unsup_term->item();
            if (cfg.unsup.beta != 0.0) total = add(total, scale(*unsup_term, cfg.unsup.beta));
        }

        rec.total = total.item();
        if (!std::isfinite(rec.total) || !std::isfinite(rec.ce) || !std::isfinite(rec.align) ||
            !std::isfinite(rec.unsup))
            throw DivergedRun(epoch, "non-finite loss (total " + std::to_string(rec.total) + ")");
        result.history.push_back(rec);

        tape.backward(total);
        std::vector<Matrix> grads;
        grads.reserve(leaves.size());
        for (Tensor t : leaves) grads.push_back(tape.grad(t));
        sgd_step(slots, grads, sgd, state);
    }
    for (const auto& p : named)
        if (!p.value->all_finite())
            throw DivergedRun(cfg.optim.epochs - 1, "parameter " + p.name + " became non-finite");

    result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(model), std::move(result)};
}

/// Class probabilities for every node of g, dropout disabled.
inline Matrix predict_proba(const Model& model, const SparseGraph& g) {
    const EncoderConfig enc = resolve_encoder(model.encoder_config, g);
    Tape tape;
    EncoderVars ev = bind(tape, model.encoder, false);
    Rng unused;
    const GraphOperators ops = prepare(g);
    return row_softmax(classify(encode(ops, enc, ev, false, unused), ev)).value();
}

inline std::vector<int> argmax_rows(const Matrix& m) {
    std::vector<int> out(m.rows, 0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < m.cols; ++c)
            if (m(i, c) > m(i, best)) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

/// Micro/macro-F1 of argmax predictions; AUROC of the class-1 probability for
/// binary tasks whose truth contains both classes.
inline Metrics evaluate(const Model& model, const SparseGraph& g, std::span<const int> truth) {
    if (truth.size() != g.n)
        throw ValidationError("evaluate: " + std::to_string(truth.size()) + " labels for " + std::to_string(g.n) +
                              " nodes");
    const Matrix prob = predict_proba(model, g);
    const std::vector<int> pred = argmax_rows(prob);
    Metrics m;
    m.micro_f1 = micro_f1(pred, truth);
    m.macro_f1 = macro_f1(pred, truth, g.num_classes);
    if (g.num_classes == 2) {
        std::vector<double> scores(g.n);
        for (std::size_t i = 0; i < g.n; ++i) scores[i] = prob(i, 1);
        try {
            m.auroc = auroc(scores, truth);
        } catch (const UndefinedStatistic&) {
            m.auroc.reset();
        }
    }
    return m;
}

/// The only path from a DomainPair's held-out target labels into evaluation.
class TargetEvaluation {
public:
    static Metrics evaluate(const Model& model, const DomainPair& pair) {
        return gda::evaluate(model, pair.target, pair.target_truth.reveal());
    }
};

inline Metrics evaluate_target(const Model& model, const DomainPair& pair) {
    return TargetEvaluation::evaluate(model, pair);
}

/// Trains on the pair and scores the final model on the held-out target labels.
inline TrainOutput train(const DomainPair& pair, const ExperimentConfig& cfg) {
    pair.validate();
    TrainOutput out = train_model(pair.source, pair.target, cfg);
    out.result.metrics = TargetEvaluation::evaluate(out.model, pair);
    return out;
}

}  // namespace gda
