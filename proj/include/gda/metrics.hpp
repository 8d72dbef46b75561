#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gda/error.hpp"

namespace gda {

struct Metrics {
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> auroc;
};

namespace detail {

inline void check_labels(std::span<const int> pred, std::span<const int> truth, int num_classes) {
    if (pred.size() != truth.size())
        throw ValidationError("prediction/truth length mismatch (" + std::to_string(pred.size()) + " vs " +
                              std::to_string(truth.size()) + ")");
    if (pred.empty()) throw ValidationError("metrics of an empty prediction set");
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] < 0 || truth[i] < 0 || (num_classes > 0 && (pred[i] >= num_classes || truth[i] >= num_classes)))
            throw ValidationError("label out of range at position " + std::to_string(i));
}

inline double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    const std::size_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

}  // namespace detail

/// F1 from true/false positives and false negatives pooled over all classes.
/// For single-label predictions this is accuracy.
inline double micro_f1(std::span<const int> pred, std::span<const int> truth) {
    detail::check_labels(pred, truth, 0);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == truth[i]) {
            ++tp;
        } else {
            ++fp;  // counted against the predicted class
            ++fn;  // and against the true class
        }
    }
    return detail::f1_from_counts(tp, fp, fn);
}

/// Unweighted mean of per-class F1 over all C classes. A class with no
/// predictions and no true members scores 0.
inline double macro_f1(std::span<const int> pred, std::span<const int> truth, int num_classes) {
    if (num_classes < 1) throw ValidationError("macro_f1 needs at least one class");
    detail::check_labels(pred, truth, num_classes);
    std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == truth[i]) {
            ++tp[pred[i]];
        } else {
            ++fp[pred[i]];
            ++fn[truth[i]];
        }
    }
    double total = 0.0;
    for (int c = 0; c < num_classes; ++c) total += detail::f1_from_counts(tp[c], fp[c], fn[c]);
    return total / num_classes;
}

/// Area under the ROC curve in Mann-Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// Computed from average ranks after sorting.
inline double auroc(std::span<const double> scores, std::span<const int> truth) {
    if (scores.size() != truth.size()) throw ValidationError("auroc: score/truth length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : truth) {
        if (y != 0 && y != 1) throw ValidationError("auroc: truth must be binary");
        n_pos += static_cast<std::size_t>(y);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedStatistic("auroc undefined: truth contains a single class");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Ranks are 1-based; doubled so tied averages stay integral.
    std::size_t pos_rank_sum2 = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const std::size_t avg_rank2 = (i + 1) + (j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (truth[order[k]] == 1) pos_rank_sum2 += avg_rank2;
        i = j + 1;
    }
    // 2 * U = 2 * R_pos - n_pos (n_pos + 1)
    const double u2 = static_cast<double>(pos_rank_sum2) - static_cast<double>(n_pos * (n_pos + 1));
    return u2 / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace gda
