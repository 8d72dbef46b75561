#pragma once

// Distribution-shift diagnostics for a source/target graph pair.
//
//   feature shift    multi-kernel MMD on raw node features (median bandwidth x {0.5, 1, 2})
//   label shift      KL(P_source || Q_target) of smoothed class frequencies
//   structure shift  mean over shared classes c of TV(N_c^source, N_c^target), where
//                    N_c is the average neighborhood label distribution of class-c nodes

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gda/align.hpp"
#include "gda/error.hpp"
#include "gda/graph.hpp"
#include "gda/io.hpp"

namespace gda {

inline constexpr std::array<double, 3> kFeatureShiftScales{0.5, 1.0, 2.0};
inline constexpr double kLabelSmoothing = 1e-8;

inline double feature_shift(const Matrix& xs, const Matrix& xt) {
    if (xs.rows == 0 || xt.rows == 0) throw ValidationError("feature_shift: empty domain");
    if (xs.cols != xt.cols) throw ShapeError("feature_shift: feature dimensions differ");
    double base = 0.0;
    try {
        base = median_bandwidth(xs, xt);
    } catch (const DegenerateBandwidth&) {
        return 0.0;  // every point coincides: the two samples are the same distribution
    }
    std::vector<double> gammas;
    for (double s : kFeatureShiftScales) gammas.push_back(s * base);
    return std::max(0.0, mmd_value(xs, xt, gammas));
}

/// Smoothed class frequencies (count + eps) / (n + C eps).
inline std::vector<double> class_distribution(std::span<const int> labels, int num_classes, double epsilon) {
    if (num_classes < 1) throw ValidationError("class distribution needs at least one class");
    std::vector<double> counts(num_classes, 0.0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw ValidationError("label " + std::to_string(y) + " outside [0, C)");
        counts[y] += 1.0;
    }
    const double denom = static_cast<double>(labels.size()) + num_classes * epsilon;
    for (double& c : counts) c = (c + epsilon) / denom;
    return counts;
}

/// KL divergence from source class frequencies to target class frequencies.
inline double label_shift(std::span<const int> source, std::span<const int> target, int num_classes,
                          double epsilon = kLabelSmoothing) {
    if (num_classes < 1) throw ValidationError("label_shift: C must be positive");
    if (!(epsilon > 0)) throw ConfigError("label_shift: smoothing epsilon must be positive");
    const auto p = class_distribution(source, num_classes, epsilon);
    const auto q = class_distribution(target, num_classes, epsilon);
    double kl = 0.0;
    for (int c = 0; c < num_classes; ++c) kl += p[c] * std::log(p[c] / q[c]);
    return std::max(0.0, kl);
}

/// C x C matrix whose row c is the mean neighborhood label distribution of
/// class-c nodes; present[c] is false when no class-c node has a labeled neighbor.
/// Per-node contributions are summed in sorted order, so the result does not
/// depend on node numbering.
struct NeighborhoodProfile {
    Matrix rows;
    std::vector<bool> present;
};

inline NeighborhoodProfile neighborhood_profile(const SparseGraph& g, std::span<const int> labels) {
    const auto c = static_cast<std::size_t>(g.num_classes);
    if (labels.size() != g.n) throw ValidationError("label count differs from node count");
    std::vector<std::vector<double>> contrib(c * c);
    std::vector<std::size_t> members(c, 0);
    std::vector<double> hist(c);
    for (std::size_t i = 0; i < g.n; ++i) {
        const int yi = labels[i];
        if (yi < 0) continue;
        std::fill(hist.begin(), hist.end(), 0.0);
        std::size_t deg = 0;
        for (std::uint32_t j : g.neighbors(i)) {
            if (j == i || labels[j] < 0) continue;
            hist[static_cast<std::size_t>(labels[j])] += 1.0;
            ++deg;
        }
        if (deg == 0) continue;
        ++members[static_cast<std::size_t>(yi)];
        for (std::size_t k = 0; k < c; ++k)
            if (hist[k] > 0) contrib[static_cast<std::size_t>(yi) * c + k].push_back(hist[k] / static_cast<double>(deg));
    }
    NeighborhoodProfile prof{Matrix(c, c), std::vector<bool>(c, false)};
    for (std::size_t a = 0; a < c; ++a) {
        if (members[a] == 0) continue;
        prof.present[a] = true;
        for (std::size_t k = 0; k < c; ++k) {
            auto& v = contrib[a * c + k];
            std::sort(v.begin(), v.end());
            double s = 0.0;
            for (double x : v) s += x;
            prof.rows(a, k) = s / static_cast<double>(members[a]);
        }
    }
    return prof;
}

inline double structure_shift(const SparseGraph& gs, std::span<const int> labels_s, const SparseGraph& gt,
                              std::span<const int> labels_t) {
    if (gs.num_classes != gt.num_classes) throw ValidationError("structure_shift: class counts differ");
    const auto ps = neighborhood_profile(gs, labels_s);
    const auto pt = neighborhood_profile(gt, labels_t);
    const auto c = static_cast<std::size_t>(gs.num_classes);
    double total = 0.0;
    std::size_t shared = 0;
    for (std::size_t a = 0; a < c; ++a) {
        if (!ps.present[a] || !pt.present[a]) continue;
        double l1 = 0.0;
        for (std::size_t k = 0; k < c; ++k) l1 += std::abs(ps.rows(a, k) - pt.rows(a, k));
        total += 0.5 * l1;
        ++shared;
    }
    if (shared == 0) throw UndefinedStatistic("structure_shift undefined: no class has neighbors in both domains");
    return total / static_cast<double>(shared);
}

/// Both graphs must carry their labels.
inline double structure_shift(const SparseGraph& gs, const SparseGraph& gt) {
    return structure_shift(gs, gs.labels, gt, gt.labels);
}

struct ShiftReport {
    double feature_shift = 0.0;
    double structure_shift = 0.0;
    double label_shift = 0.0;
    double homophily_source = 0.0;
    double homophily_target = 0.0;
    double avg_degree_source = 0.0;
    double avg_degree_target = 0.0;
};

/// Measures a pair of fully labeled graphs.
inline ShiftReport shift_report(const SparseGraph& source, std::span<const int> source_labels,
                                const SparseGraph& target, std::span<const int> target_labels) {
    if (source.d() != target.d()) throw ValidationError("shift_report: feature dimensions differ");
    if (source.num_classes != target.num_classes) throw ValidationError("shift_report: class counts differ");
    auto with_labels = [](const SparseGraph& g, std::span<const int> y) {
        SparseGraph copy = g;
        copy.labels.assign(y.begin(), y.end());
        return copy;
    };
    const SparseGraph s = with_labels(source, source_labels);
    const SparseGraph t = with_labels(target, target_labels);
    ShiftReport r;
    r.feature_shift = feature_shift(s.features, t.features);
    r.structure_shift = structure_shift(s, t);
    r.label_shift = label_shift(s.labels, t.labels, s.num_classes);
    r.homophily_source = edge_homophily(s);
    r.homophily_target = edge_homophily(t);
    r.avg_degree_source = degree_stats(s).avg_degree;
    r.avg_degree_target = degree_stats(t).avg_degree;
    return r;
}

inline ShiftReport shift_report(const SparseGraph& source, const SparseGraph& target) {
    return shift_report(source, source.labels, target, target.labels);
}

/// The only path from a DomainPair's held-out target labels into shift measurement.
class ShiftMeasurement {
public:
    static ShiftReport report(const DomainPair& pair) {
        return shift_report(pair.source, pair.source.labels, pair.target, pair.target_truth.reveal());
    }
};

inline ShiftReport shift_report(const DomainPair& pair) { return ShiftMeasurement::report(pair); }

/// Report JSON with 6-decimal fixed numbers and a trailing newline.
inline std::string to_json(const ShiftReport& r) {
    auto f = [](double v) { return io::format_fixed(v, 6); };
    return "{\"feature_shift\": " + f(r.feature_shift) + ", \"structure_shift\": " + f(r.structure_shift) +
           ", \"label_shift\": " + f(r.label_shift) + ", \"homophily\": {\"source\": " + f(r.homophily_source) +
           ", \"target\": " + f(r.homophily_target) + "}, \"avg_degree\": {\"source\": " + f(r.avg_degree_source) +
           ", \"target\": " + f(r.avg_degree_target) + "}}\n";
}

inline ShiftReport parse_shift_report(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ShiftReport r;
        r.feature_shift = j.at("feature_shift").get<double>();
        r.structure_shift = j.at("structure_shift").get<double>();
        r.label_shift = j.at("label_shift").get<double>();
        r.homophily_source = j.at("homophily").at("source").get<double>();
        r.homophily_target = j.at("homophily").at("target").get<double>();
        r.avg_degree_source = j.at("avg_degree").at("source").get<double>();
        r.avg_degree_target = j.at("avg_degree").at("target").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("shift report: ") + e.what());
    }
}

}  // namespace gda
