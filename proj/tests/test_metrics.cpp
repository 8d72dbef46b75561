#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"

using namespace gda;

namespace {

using Ints = std::vector<int>;
using Reals = std::vector<double>;

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    return perm;
}

template <class T>
std::vector<T> permuted(const std::vector<T>& v, const std::vector<std::size_t>& perm) {
    std::vector<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[perm[i]] = v[i];
    return out;
}

}  // namespace

TEST(MicroF1, Examples) {
    EXPECT_EQ(micro_f1(Ints{0, 1, 2, 1}, Ints{0, 1, 2, 1}), 1.0);
    EXPECT_EQ(micro_f1(Ints{1, 0, 0, 1}, Ints{0, 1, 1, 0}), 0.0);
    EXPECT_EQ(micro_f1(Ints{0, 1, 1, 1}, Ints{0, 0, 1, 2}), 0.5);
}

TEST(MicroF1, LengthMismatchRejected) { EXPECT_THROW(micro_f1(Ints{0, 1}, Ints{0}), ValidationError); }

TEST(MacroF1, Examples) {
    EXPECT_EQ(macro_f1(Ints{0, 1, 2, 2}, Ints{0, 1, 2, 2}, 3), 1.0);
    // Class 0: TP1 FN1 -> 2/3. Class 1: TP1 FP2 -> 1/2. Class 2: FN1 -> 0.
    EXPECT_DOUBLE_EQ(macro_f1(Ints{0, 1, 1, 1}, Ints{0, 0, 1, 2}, 3), 7.0 / 18.0);
    EXPECT_EQ(macro_f1(Ints{0, 1, 1, 1}, Ints{0, 0, 1, 2}, 3), oracle::macro_f1({0, 1, 1, 1}, {0, 0, 1, 2}, 3));
}

TEST(MacroF1, AbsentClassCountsAsZero) {
    EXPECT_DOUBLE_EQ(macro_f1(Ints{0, 1}, Ints{0, 1}, 3), 2.0 / 3.0);
    EXPECT_THROW(macro_f1(Ints{0, 3}, Ints{0, 1}, 3), ValidationError);
}

TEST(Auroc, Examples) {
    EXPECT_EQ(auroc(Reals{0.1, 0.2, 0.8, 0.9}, Ints{0, 0, 1, 1}), 1.0);
    EXPECT_EQ(auroc(Reals{0.3, 0.3, 0.3, 0.3}, Ints{0, 1, 0, 1}), 0.5);
    EXPECT_EQ(auroc(Reals{0.1, 0.4, 0.35, 0.8}, Ints{0, 0, 1, 1}), 0.75);
}

TEST(Auroc, SingleClassUndefined) {
    EXPECT_THROW(auroc(Reals{0.1, 0.2}, Ints{1, 1}), UndefinedStatistic);
    EXPECT_THROW(auroc(Reals{0.1, 0.2}, Ints{0, 2}), ValidationError);
}

TEST(Metrics, MatchOraclesExactly) {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        const int c = 2 + static_cast<int>(rng.below(4));
        Ints pred(n), truth(n);
        for (auto& v : pred) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
        for (auto& v : truth) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
        const double micro = micro_f1(pred, truth);
        EXPECT_EQ(micro, oracle::micro_f1(pred, truth, c));
        EXPECT_EQ(macro_f1(pred, truth, c), oracle::macro_f1(pred, truth, c));
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) hits += pred[i] == truth[i];
        EXPECT_EQ(micro, static_cast<double>(hits) / static_cast<double>(n));

        // Coarse scores so ties are common.
        Reals scores(n);
        Ints y(n);
        for (auto& s : scores) s = static_cast<double>(rng.below(5)) / 4.0;
        for (auto& v : y) v = static_cast<int>(rng.below(2));
        y[0] = 0;
        y[1] = 1;
        EXPECT_EQ(auroc(scores, y), oracle::auroc(scores, y));
    }
}

TEST(Metrics, PermutationInvariant) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + rng.below(20);
        Ints pred(n), truth(n);
        Reals scores(n);
        for (auto& v : pred) v = static_cast<int>(rng.below(3));
        for (auto& v : truth) v = static_cast<int>(rng.below(2));
        truth[0] = 0;
        truth[1] = 1;
        for (auto& s : scores) s = rng.uniform();
        const auto perm = random_permutation(n, rng);
        EXPECT_EQ(micro_f1(pred, truth), micro_f1(permuted(pred, perm), permuted(truth, perm)));
        EXPECT_EQ(macro_f1(pred, truth, 3), macro_f1(permuted(pred, perm), permuted(truth, perm), 3));
        EXPECT_EQ(auroc(scores, truth), auroc(permuted(scores, perm), permuted(truth, perm)));
    }
}

TEST(Auroc, NegationAntiSymmetry) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        Reals s(n), neg(n);
        Ints y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(6));
            neg[i] = -s[i];
            y[i] = static_cast<int>(rng.below(2));
        }
        y[0] = 0;
        y[1] = 1;
        EXPECT_NEAR(auroc(s, y) + auroc(neg, y), 1.0, 1e-12);
    }
}
