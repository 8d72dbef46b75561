#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gda/encoder.hpp"
#include "gda/error.hpp"
#include "gda/optim.hpp"
#include "gda/rng.hpp"
#include "gda/tape.hpp"

namespace gda {

enum class AlignKind { None, Mmd, Adversarial };
enum class LambdaSchedule { Constant, Ramp };

struct AlignmentConfig {
    AlignKind kind = AlignKind::None;
    double alpha = 1.0;
    std::vector<double> bandwidth_scales{0.5, 1.0, 2.0};
    std::size_t disc_hidden = 64;
    double lambda_max = 1.0;
    LambdaSchedule lambda_schedule = LambdaSchedule::Ramp;

    void validate() const {
        if (!(alpha >= 0)) throw ConfigError("alpha must be nonnegative");
        if (kind == AlignKind::Mmd) {
            if (bandwidth_scales.empty()) throw ConfigError("bandwidth_scales must be nonempty");
            for (double s : bandwidth_scales)
                if (!(s > 0)) throw ConfigError("bandwidth scales must be positive");
        }
        if (kind == AlignKind::Adversarial) {
            if (disc_hidden == 0) throw ConfigError("disc_hidden must be positive");
            if (!(lambda_max >= 0)) throw ConfigError("lambda_max must be nonnegative");
        }
    }
};

// ---------------------------------------------------------------------------
// Maximum mean discrepancy
// ---------------------------------------------------------------------------

namespace detail {

/// Squared Euclidean distances between all rows of z (symmetric, zero diagonal),
/// computed from the Gram matrix.
inline Matrix pairwise_sq_distances(const Matrix& z) {
    const std::size_t n = z.rows;
    Matrix d(n, n);
    if (n == 0) return d;
    auto dv = view(d);
    if (z.cols > 0) dv.selfadjointView<Eigen::Upper>().rankUpdate(view(z));
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = d(i, i);
    for (std::size_t i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) d(i, j) = std::max(0.0, sq[i] + sq[j] - 2.0 * d(i, j));
    }
    dv.triangularView<Eigen::StrictlyLower>() = dv.transpose();
    return d;
}

inline Matrix stack_rows(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw ShapeError("row stacking needs equal widths (" + shape_str(a) + ", " + shape_str(b) + ")");
    Matrix z(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), z.data.begin());
    std::copy(b.data.begin(), b.data.end(), z.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return z;
}

/// gamma = 1 / (2 median^2) over the strict upper triangle of sq_dist. Lower
/// median for even counts; falls back to the median of nonzero distances when
/// more than half the pairs coincide.
inline double median_gamma(const Matrix& sq_dist) {
    const std::size_t n = sq_dist.rows;
    std::vector<double> dist;
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dist.push_back(sq_dist(i, j));
    if (dist.empty()) throw DegenerateBandwidth("median bandwidth needs at least two points");
    auto lower_median = [](std::vector<double>& v) {
        auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
        std::nth_element(v.begin(), mid, v.end());
        return *mid;
    };
    double med = lower_median(dist);
    if (!(med > 0)) {
        std::erase_if(dist, [](double v) { return !(v > 0); });
        if (dist.empty()) throw DegenerateBandwidth("all points identical: bandwidth undefined");
        med = lower_median(dist);
    }
    // dist holds squared distances; the median commutes with the monotone sqrt.
    return 1.0 / (2.0 * med);
}

struct MmdForward {
    double value = 0.0;
    Matrix coeff;  // c_ij such that dL/dz_i = sum_j c_ij (z_i - z_j)
};

inline MmdForward mmd_from_distances(const Matrix& d, std::size_t ns, std::size_t nt, std::span<const double> gammas,
                                     bool want_grad) {
    const std::size_t n = ns + nt;
    const double wss = 1.0 / (static_cast<double>(ns) * static_cast<double>(ns));
    const double wtt = 1.0 / (static_cast<double>(nt) * static_cast<double>(nt));
    const double wst = -1.0 / (static_cast<double>(ns) * static_cast<double>(nt));
    MmdForward out;
    if (want_grad) out.coeff = Matrix(n, n);
    // Diagonal pairs contribute k = |gammas| each; off-diagonal pairs are visited once (row i, j > i) and doubled.
    const double diag = static_cast<double>(gammas.size());
    double kss = diag * static_cast<double>(ns), ktt = diag * static_cast<double>(nt), kst = 0.0;
    Eigen::ArrayXd k(static_cast<Eigen::Index>(n)), dk(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto len = static_cast<Eigen::Index>(n - i - 1);
        Eigen::Map<const Eigen::ArrayXd> dist(&d.data[i * n + i + 1], len);
        auto ks = k.head(len);
        auto dks = dk.head(len);
        ks.setZero();
        dks.setZero();
        for (double g : gammas) {
            const Eigen::ArrayXd e = (-g * dist).exp();
            ks += e;
            if (want_grad) dks += g * e;
        }
        // Columns j > i split into the source block [i+1, ns) and the target block [max(i+1, ns), n).
        const auto n_src = static_cast<Eigen::Index>(i + 1 < ns ? ns - i - 1 : 0);
        const double ksrc = ks.head(n_src).sum(), ktgt = ks.tail(len - n_src).sum();
        const bool si = i < ns;
        if (si) {
            kss += 2.0 * ksrc;
            kst += 2.0 * ktgt;
        } else {
            ktt += 2.0 * ktgt;
        }
        if (want_grad) {
            Eigen::Map<Eigen::ArrayXd> c(&out.coeff.data[i * n + i + 1], len);
            c.head(n_src) = (-4.0 * wss) * dks.head(n_src);
            c.tail(len - n_src) = (-4.0 * (si ? wst : wtt)) * dks.tail(len - n_src);
        }
    }
    if (want_grad) {
        auto cv = view(out.coeff);
        cv.triangularView<Eigen::StrictlyLower>() = cv.transpose();
    }
    out.value = kss * wss + ktt * wtt + kst * wst;
    return out;
}

}  // namespace detail

/// Median-heuristic RBF precision for the pooled sample of hs and ht rows.
inline double median_bandwidth(const Matrix& hs, const Matrix& ht) {
    return detail::median_gamma(detail::pairwise_sq_distances(detail::stack_rows(hs, ht)));
}

namespace detail {

inline Tensor mmd_record(Tensor hs, Tensor ht, Matrix z, const Matrix& sq_dist, std::span<const double> gammas) {
    for (double g : gammas)
        if (!(g > 0)) throw ConfigError("mmd_loss: bandwidths must be positive");
    const std::size_t ns = hs.rows(), nt = ht.rows();
    const bool want_grad = hs.tape().requires_grad(hs) || hs.tape().requires_grad(ht);
    MmdForward fw = mmd_from_distances(sq_dist, ns, nt, gammas, want_grad);
    Matrix out(1, 1, fw.value);
    return hs.tape().record(
        std::move(out), {hs, ht}, [hs, ht, ns, coeff = std::move(fw.coeff), z = std::move(z)](Tape& tp, const Matrix& g) {
            const double scale = g.data[0];
            Matrix cz = gemm(coeff, false, z, false);
            const Eigen::VectorXd rs = view(coeff).rowwise().sum();
            Matrix ds(ns, z.cols), dt(z.rows - ns, z.cols);
            for (std::size_t i = 0; i < z.rows; ++i) {
                Matrix& dst = i < ns ? ds : dt;
                const std::size_t r = i < ns ? i : i - ns;
                const double ri = rs(static_cast<Eigen::Index>(i));
                for (std::size_t f = 0; f < z.cols; ++f) dst(r, f) = scale * (ri * z(i, f) - cz(i, f));
            }
            tp.accumulate(hs, ds);
            tp.accumulate(ht, dt);
        });
}

inline void check_mmd_inputs(Tensor hs, Tensor ht) {
    if (hs.rows() == 0 || ht.rows() == 0) throw ValidationError("mmd_loss: empty sample");
    if (hs.cols() != ht.cols()) throw ShapeError("mmd_loss: source and target widths differ");
}

}  // namespace detail

/// Biased (V-statistic) multi-kernel MMD^2 with k_g(x, y) = exp(-g |x - y|^2),
/// summed over gammas:
///   sum_g [ mean k_g(s, s') + mean k_g(t, t') - 2 mean k_g(s, t) ]
/// Differentiable w.r.t. both inputs.
inline Tensor mmd_loss(Tensor hs, Tensor ht, std::span<const double> gammas) {
    detail::check_mmd_inputs(hs, ht);
    if (gammas.empty()) throw ConfigError("mmd_loss: no kernel bandwidths");
    Matrix z = detail::stack_rows(hs.value(), ht.value());
    Matrix d = detail::pairwise_sq_distances(z);
    return detail::mmd_record(hs, ht, std::move(z), d, gammas);
}

/// mmd_loss with precisions scales * median_bandwidth, the median taken on the
/// current (detached) values. A pooled sample with no spread falls back to a
/// base precision of 1.
inline Tensor mmd_loss_median(Tensor hs, Tensor ht, std::span<const double> scales) {
    detail::check_mmd_inputs(hs, ht);
    if (scales.empty()) throw ConfigError("mmd_loss: no bandwidth scales");
    Matrix z = detail::stack_rows(hs.value(), ht.value());
    Matrix d = detail::pairwise_sq_distances(z);
    double base = 1.0;
    try {
        base = detail::median_gamma(d);
    } catch (const DegenerateBandwidth&) {
    }
    std::vector<double> gammas;
    for (double s : scales) gammas.push_back(s * base);
    return detail::mmd_record(hs, ht, std::move(z), d, gammas);
}

inline Tensor mmd_loss(Tensor hs, Tensor ht, std::initializer_list<double> gammas) {
    return mmd_loss(hs, ht, std::span<const double>(gammas.begin(), gammas.size()));
}

/// Precision list scales * median_bandwidth(hs, ht).
inline std::vector<double> scaled_bandwidths(const Matrix& hs, const Matrix& ht, std::span<const double> scales) {
    const double base = median_bandwidth(hs, ht);
    std::vector<double> out;
    out.reserve(scales.size());
    for (double s : scales) out.push_back(s * base);
    return out;
}

/// Plain-value MMD (no tape), used by dataset statistics.
inline double mmd_value(const Matrix& xs, const Matrix& xt, std::span<const double> gammas) {
    if (xs.rows == 0 || xt.rows == 0) throw ValidationError("mmd: empty sample");
    Matrix z = detail::stack_rows(xs, xt);
    return detail::mmd_from_distances(detail::pairwise_sq_distances(z), xs.rows, xt.rows, gammas, false).value;
}

// ---------------------------------------------------------------------------
// Adversarial alignment
// ---------------------------------------------------------------------------

/// Domain classifier hidden -> disc_hidden -> 1 with relu.
struct DiscriminatorParams {
    Matrix w1, b1, w2, b2;

    ParamList params() {
        return {{"disc.W1", &w1}, {"disc.b1", &b1}, {"disc.W2", &w2}, {"disc.b2", &b2}};
    }
};

inline DiscriminatorParams init_discriminator(std::size_t in, std::size_t hidden, Rng& rng) {
    DiscriminatorParams p;
    p.w1 = glorot_uniform(in, hidden, rng);
    p.b1 = Matrix(1, hidden);
    p.w2 = glorot_uniform(hidden, 1, rng);
    p.b2 = Matrix(1, 1);
    return p;
}

struct DiscriminatorVars {
    Tensor w1, b1, w2, b2;
    std::vector<Tensor> tensors() const { return {w1, b1, w2, b2}; }
};

inline DiscriminatorVars bind(Tape& tape, const DiscriminatorParams& p, bool trainable = true) {
    return {tape.leaf(p.w1, trainable), tape.leaf(p.b1, trainable), tape.leaf(p.w2, trainable),
            tape.leaf(p.b2, trainable)};
}

/// Domain logits, one per row.
inline Tensor discriminate(Tensor h, const DiscriminatorVars& d) {
    return add_bias(matmul(relu(add_bias(matmul(h, d.w1), d.b1)), d.w2), d.b2);
}

struct DomainLabels {
    int source = 0;
    int target = 1;
};

/// Mean binary cross-entropy of the discriminator over all pooled rows, applied
/// after gradient reversal. BCE(z, y) = softplus(z) - y z.
inline Tensor adversarial_loss(Tensor hs, Tensor ht, const DiscriminatorVars& disc, double lambda,
                               DomainLabels labels = {}) {
    if (hs.rows() == 0 || ht.rows() == 0) throw ValidationError("adversarial_loss: empty sample");
    auto bce_sum = [&](Tensor h, int y) {
        Tensor z = discriminate(grad_reverse(h, lambda), disc);
        return sum(y == 1 ? softplus(neg(z)) : softplus(z));
    };
    const double n = static_cast<double>(hs.rows() + ht.rows());
    return scale(add(bce_sum(hs, labels.source), bce_sum(ht, labels.target)), 1.0 / n);
}

/// Reversal strength at a training step. Ramp: lambda_max (2 / (1 + e^{-10 step/total}) - 1).
inline double lambda_at(int step, int total, LambdaSchedule schedule, double lambda_max) {
    if (total < 1 || step < 0 || step > total) throw ConfigError("lambda_at: need 0 <= step <= total, total >= 1");
    if (schedule == LambdaSchedule::Constant) return lambda_max;
    const double progress = static_cast<double>(step) / static_cast<double>(total);
    return lambda_max * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

}  // namespace gda
