#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"

using namespace gda;

namespace {

double mmd_of(const Matrix& xs, const Matrix& xt, std::initializer_list<double> gammas) {
    Tape t;
    return mmd_loss(t.constant(xs), t.constant(xt), gammas).item();
}

/// Sort-based median of Euclidean distances (lower median), converted to a precision.
double median_gamma_oracle(const Matrix& xs, const Matrix& xt) {
    const Matrix z = detail::stack_rows(xs, xt);
    std::vector<double> dist;
    for (std::size_t i = 0; i < z.rows; ++i)
        for (std::size_t j = i + 1; j < z.rows; ++j) dist.push_back(std::sqrt(oracle::sq_dist(z, i, z, j)));
    std::sort(dist.begin(), dist.end());
    const double med = dist[(dist.size() - 1) / 2];
    return 1.0 / (2.0 * med * med);
}

Matrix shifted(Matrix m, double c) {
    for (double& v : m.data) v += c;
    return m;
}

Matrix permute_rows(const Matrix& m, Rng& rng) {
    std::vector<std::size_t> perm(m.rows);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = m.rows; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t f = 0; f < m.cols; ++f) out(i, f) = m(perm[i], f);
    return out;
}

Matrix gaussian(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

}  // namespace

// --- MMD ---------------------------------------------------------------------

TEST(Mmd, IdenticalSetsGiveZero) {
    Rng rng(1);
    const auto x = oracle::random_matrix(10, 3, rng);
    EXPECT_NEAR(mmd_of(x, x, {0.5, 1.0, 2.0}), 0.0, 1e-12);
    EXPECT_NEAR(mmd_of(x, permute_rows(x, rng), {1.0}), 0.0, 1e-12);
}

TEST(Mmd, SinglePointClosedForm) {
    Matrix x(1, 1), y(1, 1, 1.0);
    EXPECT_NEAR(mmd_of(x, y, {1.0}), 2.0 * (1.0 - std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(mmd_of(x, y, {1.0}), 1.26424, 1e-5);
}

TEST(Mmd, MatchesBruteForceAndIsSymmetric) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t ns = 1 + rng.below(12), nt = 1 + rng.below(12), d = 1 + rng.below(5);
        const auto xs = oracle::random_matrix(ns, d, rng), xt = oracle::random_matrix(nt, d, rng);
        const std::vector<double> g{rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0)};
        const double ours = mmd_of(xs, xt, {g[0], g[1]});
        EXPECT_NEAR(ours, oracle::mmd(xs, xt, g), 1e-10);
        EXPECT_NEAR(ours, mmd_of(xt, xs, {g[0], g[1]}), 1e-12);
        EXPECT_NEAR(mmd_value(xs, xt, g), ours, 1e-15);
    }
}

TEST(Mmd, NonnegativeAndPermutationInvariant) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto xs = oracle::random_matrix(1 + rng.below(10), 3, rng);
        const auto xt = oracle::random_matrix(1 + rng.below(10), 3, rng);
        const double v = mmd_of(xs, xt, {0.3, 1.0});
        EXPECT_GE(v, -1e-12);
        EXPECT_NEAR(mmd_of(permute_rows(xs, rng), permute_rows(xt, rng), {0.3, 1.0}), v, 1e-12);
    }
}

TEST(Mmd, MonotoneInSeparation) {
    Rng rng(4);
    const auto xs = gaussian(40, 2, rng), xt = gaussian(40, 2, rng);
    double prev = -1.0;
    for (double c : {0.0, 0.5, 1.0, 2.0}) {
        const double v = mmd_of(xs, shifted(xt, c), {0.5});
        EXPECT_GT(v, prev) << "c=" << c;
        prev = v;
    }
}

TEST(Mmd, EmptyOrMismatchedRejected) {
    Tape t;
    EXPECT_THROW(mmd_loss(t.constant(Matrix(0, 2)), t.constant(Matrix(3, 2)), {1.0}), ValidationError);
    EXPECT_THROW(mmd_loss(t.constant(Matrix(2, 2)), t.constant(Matrix(3, 3)), {1.0}), ShapeError);
    EXPECT_THROW(mmd_loss(t.constant(Matrix(2, 2)), t.constant(Matrix(3, 2)), {-1.0}), ConfigError);
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const oracle::Builder f = [](Tape&, const std::vector<Tensor>& in) {
            return mmd_loss(in[0], in[1], {0.5, 1.0, 2.0});
        };
        EXPECT_LE(oracle::gradient_error({oracle::random_matrix(1 + rng.below(8), 4, rng),
                                          oracle::random_matrix(1 + rng.below(8), 4, rng)},
                                         f),
                  1e-4);
    }
}

TEST(Mmd, MedianVariantGradientTreatsBandwidthAsConstant) {
    Rng rng(6);
    const auto xs = oracle::random_matrix(5, 3, rng), xt = oracle::random_matrix(6, 3, rng);
    const auto gammas = scaled_bandwidths(xs, xt, kFeatureShiftScales);
    Tape t1, t2;
    auto a = t1.leaf(xs), b = t1.leaf(xt);
    const auto l1 = mmd_loss_median(a, b, kFeatureShiftScales);
    t1.backward(l1);
    auto c = t2.leaf(xs), d = t2.leaf(xt);
    const auto l2 = mmd_loss(c, d, gammas);
    t2.backward(l2);
    EXPECT_NEAR(l1.item(), l2.item(), 1e-15);
    for (std::size_t k = 0; k < xs.size(); ++k) EXPECT_NEAR(t1.grad(a).data[k], t2.grad(c).data[k], 1e-14);
}

// --- median bandwidth --------------------------------------------------------

TEST(MedianBandwidth, TwoPointsDistanceTwo) {
    Matrix a(1, 2), b(1, 2);
    b(0, 1) = 2.0;
    EXPECT_DOUBLE_EQ(median_bandwidth(a, b), 1.0 / 8.0);
}

TEST(MedianBandwidth, ScalingHomogeneity) {
    Rng rng(7);
    const auto xs = oracle::random_matrix(7, 3, rng), xt = oracle::random_matrix(5, 3, rng);
    auto scaled = [](Matrix m, double c) {
        for (double& v : m.data) v *= c;
        return m;
    };
    for (double c : {0.1, 3.0, 17.0})
        EXPECT_NEAR(median_bandwidth(scaled(xs, c), scaled(xt, c)), median_bandwidth(xs, xt) / (c * c),
                    1e-12 * median_bandwidth(xs, xt) / (c * c));
}

TEST(MedianBandwidth, MatchesSortOracle) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const auto xs = oracle::random_matrix(1 + rng.below(10), 1 + rng.below(4), rng);
        const auto xt = oracle::random_matrix(1 + rng.below(10), xs.cols, rng);
        const double want = median_gamma_oracle(xs, xt);
        EXPECT_NEAR(median_bandwidth(xs, xt), want, 1e-12 * want);
    }
}

TEST(MedianBandwidth, IdenticalPointsAreDegenerate) {
    Matrix a(3, 2, 1.5);
    EXPECT_THROW(median_bandwidth(a, a), DegenerateBandwidth);
    EXPECT_THROW(median_bandwidth(Matrix(1, 2), Matrix(0, 2)), DegenerateBandwidth);
}

// --- adversarial -------------------------------------------------------------

TEST(Adversarial, ZeroLogitsGiveLn2) {
    Rng rng(9);
    auto disc = init_discriminator(3, 4, rng);
    std::fill(disc.w2.data.begin(), disc.w2.data.end(), 0.0);
    Tape t;
    const auto v = bind(t, disc);
    const double loss =
        adversarial_loss(t.constant(oracle::random_matrix(4, 3, rng)), t.constant(oracle::random_matrix(7, 3, rng)), v, 1.0)
            .item();
    EXPECT_NEAR(loss, std::log(2.0), 1e-15);
}

TEST(Adversarial, LambdaZeroBlocksEncoderGradient) {
    Rng rng(10);
    const auto disc = init_discriminator(3, 5, rng);
    Tape t;
    auto hs = t.leaf(oracle::random_matrix(4, 3, rng)), ht = t.leaf(oracle::random_matrix(5, 3, rng));
    const auto v = bind(t, disc);
    t.backward(adversarial_loss(hs, ht, v, 0.0));
    for (double g : t.grad(hs).data) EXPECT_EQ(g, 0.0);
    for (double g : t.grad(ht).data) EXPECT_EQ(g, 0.0);
    double mag = 0.0;
    for (double g : t.grad(v.w2).data) mag += std::abs(g);
    EXPECT_GT(mag, 0.0);
}

TEST(Adversarial, ReversalNegatesAndScalesEncoderGradient) {
    Rng rng(11);
    const auto disc = init_discriminator(3, 5, rng);
    const auto xs = oracle::random_matrix(4, 3, rng), xt = oracle::random_matrix(5, 3, rng);
    // Plain BCE gradient without reversal, from finite differences of the loss value.
    auto value = [&](const Matrix& a) {
        Tape t;
        return adversarial_loss(t.constant(a), t.constant(xt), bind(t, disc, false), 1.0).item();
    };
    Tape t;
    auto hs = t.leaf(xs);
    t.backward(adversarial_loss(hs, t.constant(xt), bind(t, disc), 0.7));
    for (std::size_t k = 0; k < xs.size(); ++k) {
        auto p = xs, m = xs;
        p.data[k] += 1e-6;
        m.data[k] -= 1e-6;
        const double fd = (value(p) - value(m)) / 2e-6;
        EXPECT_NEAR(t.grad(hs).data[k], -0.7 * fd, 1e-7);
    }
}

TEST(Adversarial, DiscriminatorGradientMatchesFiniteDifferences) {
    Rng rng(12);
    const auto xs = oracle::random_matrix(5, 3, rng), xt = oracle::random_matrix(3, 3, rng);
    const auto disc = init_discriminator(3, 4, rng);
    const oracle::Builder f = [&](Tape& t, const std::vector<Tensor>& in) {
        const DiscriminatorVars v{in[0], in[1], in[2], in[3]};
        return adversarial_loss(t.constant(xs), t.constant(xt), v, 1.0);
    };
    auto b1 = oracle::random_matrix(1, 4, rng, -0.5, 0.5), b2 = oracle::random_matrix(1, 1, rng);
    EXPECT_LE(oracle::gradient_error({disc.w1, b1, disc.w2, b2}, f), 1e-4);
}

TEST(Adversarial, SwapDomainsWithFlippedLabels) {
    Rng rng(13);
    const auto disc = init_discriminator(4, 6, rng);
    for (int trial = 0; trial < 10; ++trial) {
        const auto xs = oracle::random_matrix(1 + rng.below(8), 4, rng), xt = oracle::random_matrix(1 + rng.below(8), 4, rng);
        Tape t;
        const auto v = bind(t, disc, false);
        const double a = adversarial_loss(t.constant(xs), t.constant(xt), v, 1.0).item();
        const double b = adversarial_loss(t.constant(xt), t.constant(xs), v, 1.0, DomainLabels{1, 0}).item();
        EXPECT_NEAR(a, b, 1e-12);
    }
}

// --- lambda schedule ---------------------------------------------------------

TEST(LambdaSchedule, Ramp) {
    EXPECT_EQ(lambda_at(0, 100, LambdaSchedule::Ramp, 1.0), 0.0);
    EXPECT_NEAR(lambda_at(100, 100, LambdaSchedule::Ramp, 2.0), 2.0 * (2.0 / (1.0 + std::exp(-10.0)) - 1.0), 1e-15);
    EXPECT_NEAR(lambda_at(100, 100, LambdaSchedule::Ramp, 1.0), 0.99991, 1e-5);
    double prev = -1.0;
    for (int s = 0; s <= 50; ++s) {
        const double l = lambda_at(s, 50, LambdaSchedule::Ramp, 1.0);
        EXPECT_GT(l, prev);
        prev = l;
    }
}

TEST(LambdaSchedule, ConstantIgnoresStep) {
    for (int s : {0, 7, 20}) EXPECT_EQ(lambda_at(s, 20, LambdaSchedule::Constant, 0.3), 0.3);
    EXPECT_THROW(lambda_at(21, 20, LambdaSchedule::Constant, 0.3), ConfigError);
    EXPECT_THROW(lambda_at(0, 0, LambdaSchedule::Ramp, 0.3), ConfigError);
}

TEST(AlignmentConfig, Validation) {
    AlignmentConfig c;
    c.kind = AlignKind::Mmd;
    c.bandwidth_scales = {};
    EXPECT_THROW(c.validate(), ConfigError);
    c.bandwidth_scales = {1.0, 0.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.alpha = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}
