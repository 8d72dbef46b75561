#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "gda/gda.hpp"
#include "oracles.hpp"

using namespace gda;

namespace {

SparseMatrixRef random_csr(std::size_t rows, std::size_t cols, double density, Rng& rng) {
    auto s = std::make_shared<CsrMatrix>();
    s->rows = rows;
    s->cols = cols;
    s->row_offsets.push_back(0);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j)
            if (rng.bernoulli(density)) {
                s->col_indices.push_back(static_cast<std::uint32_t>(j));
                s->values.push_back(rng.uniform(-2, 2));
            }
        s->row_offsets.push_back(s->col_indices.size());
    }
    return s;
}

}  // namespace

TEST(Matmul, IdentityTimesB) {
    Tape t;
    Matrix b{{1, 2}, {3, 4}};
    EXPECT_EQ(matmul(t.constant(Matrix::identity(2)), t.constant(b)).value(), b);
}

TEST(Matmul, HandProduct) {
    Tape t;
    Matrix out = matmul(t.constant({{1, 2}, {3, 4}}), t.constant({{0}, {1}})).value();
    EXPECT_EQ(out, (Matrix{{2}, {4}}));
}

TEST(Matmul, ShapeMismatchThrows) {
    Tape t;
    EXPECT_THROW(matmul(t.constant(Matrix(2, 3)), t.constant(Matrix(2, 3))), ShapeError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
    Rng rng(1);
    auto f = [](Tape&, const std::vector<Tensor>& x) { return sum(matmul(x[0], x[1])); };
    EXPECT_LE(oracle::gradient_error({oracle::random_matrix(3, 3, rng), oracle::random_matrix(3, 3, rng)}, f), 1e-6);
}

TEST(Spmm, ZeroSparseGivesZeros) {
    auto s = std::make_shared<CsrMatrix>();
    s->rows = 3;
    s->cols = 3;
    s->row_offsets.assign(4, 0);
    Tape t;
    EXPECT_EQ(spmm(s, t.constant(Matrix(3, 2, 7.0))).value(), Matrix(3, 2));
}

TEST(Spmm, TwoNodeAverage) {
    auto g = SparseGraph::from_edges(2, std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}}, false,
                                     Matrix{{1}, {3}}, {0, 0}, 1);
    Tape t;
    EXPECT_EQ(spmm(normalize_gcn(g), t.constant(g.features)).value(), (Matrix{{2}, {2}}));
}

TEST(Spmm, MatchesDenseProductOnRandomInstances) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(30), c = 1 + rng.below(6);
        auto s = random_csr(n, n, 0.2, rng);
        Matrix d = oracle::random_matrix(n, c, rng);
        Tape t;
        const Matrix out = spmm(s, t.constant(d)).value();
        EXPECT_LE(oracle::max_abs_diff(oracle::mul(oracle::to_dense(s->to_dense()), oracle::to_dense(d)), out), 1e-10);
    }
}

TEST(Spmm, ColumnMismatchThrows) {
    Rng rng(3);
    auto s = random_csr(4, 5, 0.5, rng);
    Tape t;
    EXPECT_THROW(spmm(s, t.constant(Matrix(4, 2))), ShapeError);
}

TEST(Spmm, GradientMatchesFiniteDifferences) {
    Rng rng(4);
    auto s = random_csr(6, 6, 0.4, rng);
    auto f = [s](Tape&, const std::vector<Tensor>& x) { return sum(square(spmm(s, x[0]))); };
    EXPECT_LE(oracle::gradient_error({oracle::random_matrix(6, 3, rng)}, f), 1e-4);
}

TEST(Elementwise, DefinitionCases) {
    Tape t;
    EXPECT_EQ(relu(t.constant({{0, -1, 2}})).value(), (Matrix{{0, 0, 2}}));
    EXPECT_EQ(sigmoid(t.constant({{0}})).item(), 0.5);
    EXPECT_EQ(leaky_relu(t.constant({{-2, 3}}), 0.2).value(), (Matrix{{-0.4, 3}}));
    EXPECT_EQ(neg(t.constant({{1.5}})).item(), -1.5);
    EXPECT_EQ(scale(t.constant({{1.5}}), 2).item(), 3.0);
}

TEST(Elementwise, LogOfNonPositiveThrows) {
    Tape t;
    EXPECT_THROW(log(t.constant({{1, 0}})), DomainError);
    EXPECT_THROW(log(t.constant({{-1}})), DomainError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
    Rng rng(5);
    const Matrix x = oracle::random_matrix(4, 3, rng);
    const Matrix pos = oracle::random_matrix(4, 3, rng, 0.5, 2.0);
    using F = std::function<Tensor(Tensor)>;
    const std::vector<std::pair<const char*, F>> ops = {
        {"sigmoid", [](Tensor a) { return sigmoid(a); }},
        {"relu", [](Tensor a) { return relu(a); }},
        {"leaky_relu", [](Tensor a) { return leaky_relu(a, 0.2); }},
        {"exp", [](Tensor a) { return exp(a); }},
        {"neg", [](Tensor a) { return neg(a); }},
        {"scale", [](Tensor a) { return scale(a, -1.7); }},
        {"softplus", [](Tensor a) { return softplus(a); }},
        {"square", [](Tensor a) { return square(a); }},
    };
    for (const auto& [name, op] : ops) {
        auto f = [&op](Tape&, const std::vector<Tensor>& in) { return sum(hadamard(op(in[0]), op(in[0]))); };
        EXPECT_LE(oracle::gradient_error({x}, f), 1e-4) << name;
    }
    auto flog = [](Tape&, const std::vector<Tensor>& in) { return sum(log(in[0])); };
    EXPECT_LE(oracle::gradient_error({pos}, flog), 1e-4);
    auto fsig = [](Tape&, const std::vector<Tensor>& in) { return sum(sigmoid(in[0])); };
    EXPECT_LE(oracle::gradient_error({x}, fsig), 1e-6);
}

TEST(Binary, GradientsMatchFiniteDifferences) {
    Rng rng(6);
    const Matrix a = oracle::random_matrix(3, 4, rng), b = oracle::random_matrix(3, 4, rng);
    const Matrix bias = oracle::random_matrix(1, 4, rng), s = oracle::random_matrix(1, 1, rng);
    auto f = [](Tape& t, const std::vector<Tensor>& x) {
        Tensor y = add_bias(hadamard(sub(x[0], x[1]), add(x[0], x[1])), x[2]);
        y = scale_by(y, x[3]);
        return sum(square(matmul(transpose(y), t.constant(Matrix(3, 2, 0.5)))));
    };
    EXPECT_LE(oracle::gradient_error({a, b, bias, s}, f), 1e-4);
}

TEST(RowSoftmax, HandValues) {
    Tape t;
    const Matrix p = row_softmax(t.constant({{0, std::log(3.0)}, {2, 2}})).value();
    EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(p(0, 1), 0.75, 1e-15);
    EXPECT_NEAR(p(1, 0), 0.5, 1e-15);
}

TEST(RowSoftmax, RowsSumToOneAndShiftInvariant) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
        Matrix x = oracle::random_matrix(r, c, rng, -30, 30);
        Matrix shifted = x;
        for (std::size_t i = 0; i < r; ++i) {
            const double k = rng.uniform(-50, 50);
            for (std::size_t j = 0; j < c; ++j) shifted(i, j) += k;
        }
        Tape t;
        const Matrix p = row_softmax(t.constant(x)).value();
        const Matrix q = row_softmax(t.constant(shifted)).value();
        for (std::size_t i = 0; i < r; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < c; ++j) {
                s += p(i, j);
                EXPECT_GE(p(i, j), 0.0);
                EXPECT_NEAR(p(i, j), q(i, j), 1e-12);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(RowSoftmax, GradientsMatchFiniteDifferences) {
    Rng rng(8);
    const Matrix x = oracle::random_matrix(4, 3, rng), w = oracle::random_matrix(4, 3, rng);
    auto f = [&w](Tape& t, const std::vector<Tensor>& in) {
        return add(sum(hadamard(row_softmax(in[0]), t.constant(w))),
                   sum(hadamard(row_log_softmax(in[0]), t.constant(w))));
    };
    EXPECT_LE(oracle::gradient_error({x}, f), 1e-4);
}

TEST(Reduce, HandValues) {
    Tape t;
    EXPECT_EQ(sum(t.constant(Matrix::ones(2, 3))).item(), 6.0);
    EXPECT_EQ(reduce(t.constant({{1, 3}, {5, 7}}), Reduce::Mean, Axis::Rows).value(), (Matrix{{2}, {6}}));
    EXPECT_EQ(reduce(t.constant({{1, 3}, {5, 7}}), Reduce::Sum, Axis::Cols).value(), (Matrix{{6, 10}}));
}

TEST(Reduce, GradientsMatchFiniteDifferences) {
    Rng rng(9);
    const Matrix x = oracle::random_matrix(3, 4, rng);
    for (Axis axis : {Axis::All, Axis::Rows, Axis::Cols})
        for (Reduce kind : {Reduce::Sum, Reduce::Mean}) {
            auto f = [=](Tape&, const std::vector<Tensor>& in) { return sum(square(reduce(in[0], kind, axis))); };
            EXPECT_LE(oracle::gradient_error({x}, f), 1e-6);
        }
}

TEST(Dropout, IdentityCases) {
    Rng rng(10);
    Tape t;
    const Matrix x{{1, 2}, {3, 4}};
    EXPECT_EQ(dropout(t.constant(x), 0.0, rng, true).value(), x);
    EXPECT_EQ(dropout(t.constant(x), 0.9, rng, false).value(), x);
}

TEST(Dropout, ExpectationNearOne) {
    Rng rng(11);
    Tape t;
    EXPECT_NEAR(mean(dropout(t.constant(Matrix::ones(1000, 1)), 0.5, rng, true)).item(), 1.0, 0.1);
}

TEST(Dropout, InvalidProbabilityThrows) {
    Rng rng(12);
    Tape t;
    EXPECT_THROW(dropout(t.constant(Matrix(1, 1)), 1.0, rng, true), ConfigError);
    EXPECT_THROW(dropout(t.constant(Matrix(1, 1)), -0.1, rng, true), ConfigError);
}

TEST(Dropout, GradientFollowsMask) {
    Rng rng(13);
    Tape t;
    Tensor x = t.leaf(Matrix::ones(50, 2));
    Tensor y = dropout(x, 0.3, rng, true);
    t.backward(sum(y));
    const Matrix g = t.grad(x);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(g.data[k], y.value().data[k]);
}

TEST(GradReverse, ForwardIdentityBackwardNegated) {
    Tape t;
    const Matrix v{{1, -2}, {3, 0.5}};
    Tensor x = t.leaf(v);
    Tensor y = grad_reverse(x, 2.0);
    EXPECT_EQ(y.value(), v);
    t.backward(sum(y));
    EXPECT_EQ(t.grad(x), Matrix(2, 2, -2.0));

    Tape t0;
    Tensor x0 = t0.leaf(v);
    t0.backward(sum(grad_reverse(x0, 0.0)));
    for (double g : t0.grad(x0).data) EXPECT_EQ(g, 0.0);
}

TEST(Backward, LeafAndScaledSum) {
    Tape t;
    Tensor x = t.leaf(Matrix{{3}});
    t.backward(x);
    EXPECT_EQ(t.grad(x)(0, 0), 1.0);
    Tape t2;
    Tensor y = t2.leaf(Matrix(2, 3, 0.3));
    t2.backward(sum(scale(y, 2)));
    EXPECT_EQ(t2.grad(y), Matrix(2, 3, 2.0));
}

TEST(Backward, NonScalarRootThrows) {
    Tape t;
    Tensor x = t.leaf(Matrix(2, 2));
    EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Backward, UnreachedLeafGetsExactZeros) {
    Tape t;
    Tensor a = t.leaf(Matrix(2, 2, 1.0));
    Tensor b = t.leaf(Matrix(3, 1, 1.0));
    t.backward(sum(a));
    EXPECT_EQ(t.grad(b), Matrix(3, 1));
}

TEST(Backward, CompositeMatchesFiniteDifferences) {
    Rng rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        auto s = random_csr(7, 7, 0.4, rng);
        auto f = [s](Tape&, const std::vector<Tensor>& in) {
            return mean(reduce(relu(matmul(spmm(s, in[0]), in[1])), Reduce::Sum, Axis::Rows));
        };
        EXPECT_LE(oracle::gradient_error({oracle::random_matrix(7, 4, rng), oracle::random_matrix(4, 3, rng)}, f), 1e-4);
    }
}

TEST(L2Normalize, GradientAndZeroRow) {
    Rng rng(15);
    const Matrix w = oracle::random_matrix(4, 3, rng);
    auto f = [&w](Tape& t, const std::vector<Tensor>& in) { return sum(hadamard(l2_normalize_rows(in[0]), t.constant(w))); };
    EXPECT_LE(oracle::gradient_error({oracle::random_matrix(4, 3, rng)}, f), 1e-4);
    Tape t;
    EXPECT_THROW(l2_normalize_rows(t.constant({{0, 0}, {1, 0}})), ValidationError);
}

TEST(Sgd, VanillaStep) {
    Matrix theta{{1, 2}};
    const std::vector<Matrix> g{Matrix{{0.5, -1}}};
    std::vector<Matrix*> p{&theta};
    SgdState st;
    sgd_step(p, g, {0.1, 0, 0}, st);
    EXPECT_DOUBLE_EQ(theta(0, 0), 0.95);
    EXPECT_DOUBLE_EQ(theta(0, 1), 2.1);
}

TEST(Sgd, ZeroGradientLeavesParams) {
    Matrix theta{{1, 2}};
    const std::vector<Matrix> g{Matrix(1, 2)};
    std::vector<Matrix*> p{&theta};
    SgdState st;
    sgd_step(p, g, {0.1, 0, 0.9}, st);
    EXPECT_EQ(theta, (Matrix{{1, 2}}));
}

TEST(Sgd, MomentumTwoSteps) {
    Matrix theta{{1.0}};
    const std::vector<Matrix> g{Matrix{{0.3}}};
    std::vector<Matrix*> p{&theta};
    SgdState st;
    sgd_step(p, g, {0.1, 0, 0.9}, st);
    sgd_step(p, g, {0.1, 0, 0.9}, st);
    EXPECT_NEAR(theta(0, 0), 1.0 - 0.1 * (0.3 + 1.9 * 0.3), 1e-15);
}

TEST(Sgd, WeightDecayAndErrors) {
    Matrix theta{{2.0}};
    std::vector<Matrix*> p{&theta};
    SgdState st;
    sgd_step(p, std::vector<Matrix>{Matrix{{0.0}}}, {0.5, 0.1, 0}, st);
    EXPECT_DOUBLE_EQ(theta(0, 0), 2.0 - 0.5 * 0.2);
    SgdState st2;
    EXPECT_THROW(sgd_step(p, std::vector<Matrix>{Matrix(1, 2)}, {0.1, 0, 0}, st2), ShapeError);
    SgdState st3;
    EXPECT_THROW(sgd_step(p, std::vector<Matrix>{Matrix(1, 1)}, {0.0, 0, 0}, st3), ConfigError);
    EXPECT_THROW(sgd_step(p, std::vector<Matrix>{Matrix(1, 1)}, {0.1, 0, 1.0}, st3), ConfigError);
}

TEST(Tape, ForwardValuesStayFinite) {
    Rng rng(16);
    Tape t;
    Tensor x = t.constant(oracle::random_matrix(8, 8, rng, -2, 2));
    for (Tensor y : {sigmoid(x), exp(x), softplus(x), row_softmax(x), row_log_softmax(x), relu(x)})
        EXPECT_TRUE(y.value().all_finite());
}
