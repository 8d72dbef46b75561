#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation applied to Tensors created on it. Each
// recorded node keeps its forward value and a backward closure that pushes the
// node's gradient to its parents. Nodes are appended in execution order, so the
// node list is always topologically sorted and backward() is a single reverse
// sweep.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gda/error.hpp"
#include "gda/matrix.hpp"
#include "gda/rng.hpp"

namespace gda {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
public:
    Tensor() = default;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Matrix& value() const;
    std::size_t rows() const { return value().rows; }
    std::size_t cols() const { return value().cols; }

    /// Scalar value of a 1x1 tensor.
    double item() const;

private:
    friend class Tape;
    Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    /// Receives the gradient flowing into a node and accumulates into its parents.
    using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor leaf(Matrix value, bool requires_grad = true) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, false, nullptr});
        return Tensor(this, nodes_.size() - 1);
    }

    Tensor constant(Matrix value) { return leaf(std::move(value), false); }

    /// Appends an operation node. The node requires a gradient iff any parent does;
    /// otherwise the backward closure is dropped.
    Tensor record(Matrix value, std::initializer_list<Tensor> parents, Backward backward) {
        bool needs = false;
        for (const Tensor& p : parents) {
            check_owner(p);
            needs = needs || nodes_[p.id()].requires_grad;
        }
        nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : nullptr});
        return Tensor(this, nodes_.size() - 1);
    }

    const Matrix& value(Tensor t) const { return nodes_.at(t.id()).value; }
    bool requires_grad(Tensor t) const { return nodes_.at(t.id()).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Adds g into t's gradient accumulator (no-op for tensors that need no gradient).
    void accumulate(Tensor t, const Matrix& g) {
        Node& n = nodes_[t.id()];
        if (!n.requires_grad) return;
        if (!n.value.same_shape(g))
            throw ShapeError("gradient shape " + shape_str(g) + " does not match value " + shape_str(n.value));
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
            return;
        }
        for (std::size_t k = 0; k < g.size(); ++k) n.grad.data[k] += g.data[k];
    }

    /// Mutable accumulator for scatter-style backward passes; allocated as zeros on first use.
    Matrix* accumulator(Tensor t) {
        Node& n = nodes_[t.id()];
        if (!n.requires_grad) return nullptr;
        if (!n.has_grad) {
            n.grad = Matrix(n.value.rows, n.value.cols);
            n.has_grad = true;
        }
        return &n.grad;
    }

    /// Reverse sweep from a scalar root. Previous gradients are cleared first.
    void backward(Tensor root) {
        check_owner(root);
        const Matrix& rv = nodes_[root.id()].value;
        if (rv.rows != 1 || rv.cols != 1) throw ShapeError("backward root must be 1x1, got " + shape_str(rv));
        for (Node& n : nodes_) {
            n.has_grad = false;
            n.grad = Matrix();
        }
        Node& r = nodes_[root.id()];
        r.grad = Matrix::ones(1, 1);
        r.has_grad = r.requires_grad;
        for (std::size_t id = root.id() + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (!n.has_grad || !n.backward) continue;
            n.backward(*this, n.grad);
        }
    }

    /// Gradient of the last backward root w.r.t. t; zeros if no path reached t.
    Matrix grad(Tensor t) const {
        const Node& n = nodes_.at(t.id());
        if (!n.has_grad) return Matrix(n.value.rows, n.value.cols);
        return n.grad;
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad;
        bool has_grad;
        Backward backward;
    };

    void check_owner(Tensor t) const {
        if (t.tape_ != this) throw ShapeError("tensor belongs to a different tape");
    }

    std::vector<Node> nodes_;
};

inline const Matrix& Tensor::value() const { return tape_->value(*this); }

inline double Tensor::item() const {
    const Matrix& v = value();
    if (v.rows != 1 || v.cols != 1) throw ShapeError("item() on non-scalar " + shape_str(v));
    return v.data[0];
}

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}
inline Eigen::Map<RowMajor> view(Matrix& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

/// Dense product op(A) * op(B) without taping.
inline Matrix gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b) {
    const std::size_t r = trans_a ? a.cols : a.rows;
    const std::size_t ka = trans_a ? a.rows : a.cols;
    const std::size_t kb = trans_b ? b.cols : b.rows;
    const std::size_t c = trans_b ? b.rows : b.cols;
    if (ka != kb)
        throw ShapeError("matmul: inner dimensions differ (" + shape_str(a) + (trans_a ? "^T" : "") + " x " +
                         shape_str(b) + (trans_b ? "^T" : "") + ")");
    Matrix out(r, c);
    if (r == 0 || c == 0 || ka == 0) return out;
    auto o = detail::view(out);
    auto av = detail::view(a);
    auto bv = detail::view(b);
    if (!trans_a && !trans_b) o.noalias() = av * bv;
    else if (trans_a && !trans_b) o.noalias() = av.transpose() * bv;
    else if (!trans_a && trans_b) o.noalias() = av * bv.transpose();
    else o.noalias() = av.transpose() * bv.transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable operations
// ---------------------------------------------------------------------------

inline Tensor matmul(Tensor a, Tensor b) {
    Tape& t = a.tape();
    Matrix out = gemm(a.value(), false, b.value(), false);
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, gemm(g, false, b.value(), true));
        if (tp.requires_grad(b)) tp.accumulate(b, gemm(a.value(), true, g, false));
    });
}

/// Sparse-dense product. Each output row sums its stored entries in ascending column order.
inline Matrix spmm_value(const CsrMatrix& s, const Matrix& d) {
    if (s.cols != d.rows)
        throw ShapeError("spmm: sparse " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                         " times dense " + shape_str(d));
    Matrix out(s.rows, d.cols);
    for (std::size_t i = 0; i < s.rows; ++i) {
        auto orow = out.row(i);
        for (std::size_t k = s.row_begin(i); k < s.row_end(i); ++k) {
            const double w = s.values[k];
            auto drow = d.row(s.col_indices[k]);
            for (std::size_t c = 0; c < d.cols; ++c) orow[c] += w * drow[c];
        }
    }
    return out;
}

inline Tensor spmm(SparseMatrixRef s, Tensor d) {
    Matrix out = spmm_value(*s, d.value());
    return d.tape().record(std::move(out), {d}, [s, d](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(d);
        for (std::size_t i = 0; i < s->rows; ++i) {
            auto grow = g.row(i);
            for (std::size_t k = s->row_begin(i); k < s->row_end(i); ++k) {
                const double w = s->values[k];
                auto arow = acc->row(s->col_indices[k]);
                for (std::size_t c = 0; c < g.cols; ++c) arow[c] += w * grow[c];
            }
        }
    });
}

struct Elementwise {
    enum class Kind { Relu, LeakyRelu, Sigmoid, Exp, Log, Neg, Scale, Softplus, Square, Sqrt };
    Kind kind;
    double param = 0.0;  // slope for LeakyRelu, factor for Scale
};

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double apply(const Elementwise& op, double x) {
    using K = Elementwise::Kind;
    switch (op.kind) {
        case K::Relu: return x > 0 ? x : 0.0;
        case K::LeakyRelu: return x > 0 ? x : op.param * x;
        case K::Sigmoid: return sigmoid(x);
        case K::Exp: return std::exp(x);
        case K::Log: return std::log(x);
        case K::Neg: return -x;
        case K::Scale: return op.param * x;
        case K::Softplus: return softplus(x);
        case K::Square: return x * x;
        case K::Sqrt: return std::sqrt(x);
    }
    return x;
}

// Derivative given input x and output y.
inline double derivative(const Elementwise& op, double x, double y) {
    using K = Elementwise::Kind;
    switch (op.kind) {
        case K::Relu: return x > 0 ? 1.0 : 0.0;
        case K::LeakyRelu: return x > 0 ? 1.0 : op.param;
        case K::Sigmoid: return y * (1.0 - y);
        case K::Exp: return y;
        case K::Log: return 1.0 / x;
        case K::Neg: return -1.0;
        case K::Scale: return op.param;
        case K::Softplus: return sigmoid(x);
        case K::Square: return 2.0 * x;
        case K::Sqrt: return 0.5 / y;
    }
    return 0.0;
}

}  // namespace detail

inline Tensor elementwise(Tensor x, Elementwise op) {
    const Matrix& xv = x.value();
    if (op.kind == Elementwise::Kind::Log || op.kind == Elementwise::Kind::Sqrt) {
        for (double v : xv.data)
            if (!(v > 0))
                throw DomainError(op.kind == Elementwise::Kind::Log ? "log of non-positive entry"
                                                                     : "sqrt of non-positive entry");
    }
    Matrix out(xv.rows, xv.cols);
    for (std::size_t k = 0; k < xv.size(); ++k) out.data[k] = detail::apply(op, xv.data[k]);
    Matrix saved = out;
    return x.tape().record(std::move(out), {x}, [x, op, y = std::move(saved)](Tape& tp, const Matrix& g) {
        const Matrix& in = x.value();
        Matrix* acc = tp.accumulator(x);
        for (std::size_t k = 0; k < in.size(); ++k)
            acc->data[k] += g.data[k] * detail::derivative(op, in.data[k], y.data[k]);
    });
}

inline Tensor relu(Tensor x) { return elementwise(x, {Elementwise::Kind::Relu}); }
inline Tensor leaky_relu(Tensor x, double slope) { return elementwise(x, {Elementwise::Kind::LeakyRelu, slope}); }
inline Tensor sigmoid(Tensor x) { return elementwise(x, {Elementwise::Kind::Sigmoid}); }
inline Tensor exp(Tensor x) { return elementwise(x, {Elementwise::Kind::Exp}); }
inline Tensor log(Tensor x) { return elementwise(x, {Elementwise::Kind::Log}); }
inline Tensor neg(Tensor x) { return elementwise(x, {Elementwise::Kind::Neg}); }
inline Tensor scale(Tensor x, double c) { return elementwise(x, {Elementwise::Kind::Scale, c}); }
inline Tensor softplus(Tensor x) { return elementwise(x, {Elementwise::Kind::Softplus}); }
inline Tensor square(Tensor x) { return elementwise(x, {Elementwise::Kind::Square}); }

inline Tensor add(Tensor a, Tensor b) {
    detail::require_same_shape(a.value(), b.value(), "add");
    Matrix out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += b.value().data[k];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

inline Tensor sub(Tensor a, Tensor b) {
    detail::require_same_shape(a.value(), b.value(), "sub");
    Matrix out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] -= b.value().data[k];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (Matrix* acc = tp.accumulator(b))
            for (std::size_t k = 0; k < g.size(); ++k) acc->data[k] -= g.data[k];
    });
}

/// Entrywise product.
inline Tensor hadamard(Tensor a, Tensor b) {
    detail::require_same_shape(a.value(), b.value(), "hadamard");
    Matrix out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] *= b.value().data[k];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (Matrix* acc = tp.accumulator(a))
            for (std::size_t k = 0; k < g.size(); ++k) acc->data[k] += g.data[k] * b.value().data[k];
        if (Matrix* acc = tp.accumulator(b))
            for (std::size_t k = 0; k < g.size(); ++k) acc->data[k] += g.data[k] * a.value().data[k];
    });
}

/// x (n x c) plus a 1 x c bias row added to every row.
inline Tensor add_bias(Tensor x, Tensor bias) {
    const Matrix& xv = x.value();
    const Matrix& bv = bias.value();
    if (bv.rows != 1 || bv.cols != xv.cols)
        throw ShapeError("add_bias: bias " + shape_str(bv) + " for input " + shape_str(xv));
    Matrix out = xv;
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t c = 0; c < out.cols; ++c) out(i, c) += bv.data[c];
    return x.tape().record(std::move(out), {x, bias}, [x, bias](Tape& tp, const Matrix& g) {
        tp.accumulate(x, g);
        if (Matrix* acc = tp.accumulator(bias))
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t c = 0; c < g.cols; ++c) acc->data[c] += g(i, c);
    });
}

/// x times a trainable 1x1 scalar.
inline Tensor scale_by(Tensor x, Tensor s) {
    if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: factor must be 1x1");
    const double sv = s.item();
    Matrix out = x.value();
    for (double& v : out.data) v *= sv;
    return x.tape().record(std::move(out), {x, s}, [x, s](Tape& tp, const Matrix& g) {
        const double factor = s.item();
        if (Matrix* acc = tp.accumulator(x))
            for (std::size_t k = 0; k < g.size(); ++k) acc->data[k] += g.data[k] * factor;
        if (Matrix* acc = tp.accumulator(s)) {
            double sum = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) sum += g.data[k] * x.value().data[k];
            acc->data[0] += sum;
        }
    });
}

inline Tensor transpose(Tensor x) {
    const Matrix& xv = x.value();
    Matrix out(xv.cols, xv.rows);
    for (std::size_t i = 0; i < xv.rows; ++i)
        for (std::size_t j = 0; j < xv.cols; ++j) out(j, i) = xv(i, j);
    return x.tape().record(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(x);
        for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < g.cols; ++j) (*acc)(j, i) += g(i, j);
    });
}

namespace detail {

inline Matrix softmax_rows(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        auto in = x.row(i);
        auto o = out.row(i);
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) z += (o[c] = std::exp(in[c] - mx));
        for (std::size_t c = 0; c < x.cols; ++c) o[c] /= z;
    }
    return out;
}

}  // namespace detail

/// Per-row softmax with max subtraction.
inline Tensor row_softmax(Tensor x) {
    Matrix out = detail::softmax_rows(x.value());
    Matrix saved = out;
    return x.tape().record(std::move(out), {x}, [x, p = std::move(saved)](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(x);
        for (std::size_t i = 0; i < g.rows; ++i) {
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols; ++c) dot += g(i, c) * p(i, c);
            for (std::size_t c = 0; c < g.cols; ++c) (*acc)(i, c) += p(i, c) * (g(i, c) - dot);
        }
    });
}

/// Per-row log-softmax (log-sum-exp with max subtraction).
inline Tensor row_log_softmax(Tensor x) {
    const Matrix& xv = x.value();
    Matrix out(xv.rows, xv.cols);
    for (std::size_t i = 0; i < xv.rows; ++i) {
        auto in = xv.row(i);
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (double v : in) z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < xv.cols; ++c) out(i, c) = in[c] - lse;
    }
    Matrix saved = out;
    return x.tape().record(std::move(out), {x}, [x, ls = std::move(saved)](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(x);
        for (std::size_t i = 0; i < g.rows; ++i) {
            double gsum = 0.0;
            for (std::size_t c = 0; c < g.cols; ++c) gsum += g(i, c);
            for (std::size_t c = 0; c < g.cols; ++c) (*acc)(i, c) += g(i, c) - std::exp(ls(i, c)) * gsum;
        }
    });
}

enum class Reduce { Sum, Mean };
/// All: to 1x1. Rows: each row collapsed, giving n x 1. Cols: each column collapsed, giving 1 x c.
enum class Axis { All, Rows, Cols };

inline Tensor reduce(Tensor x, Reduce kind, Axis axis) {
    const Matrix& xv = x.value();
    Matrix out;
    double count = 1.0;
    switch (axis) {
        case Axis::All:
            out = Matrix(1, 1);
            for (double v : xv.data) out.data[0] += v;
            count = static_cast<double>(xv.size());
            break;
        case Axis::Rows:
            out = Matrix(xv.rows, 1);
            for (std::size_t i = 0; i < xv.rows; ++i)
                for (std::size_t c = 0; c < xv.cols; ++c) out.data[i] += xv(i, c);
            count = static_cast<double>(xv.cols);
            break;
        case Axis::Cols:
            out = Matrix(1, xv.cols);
            for (std::size_t i = 0; i < xv.rows; ++i)
                for (std::size_t c = 0; c < xv.cols; ++c) out.data[c] += xv(i, c);
            count = static_cast<double>(xv.rows);
            break;
    }
    const double factor = (kind == Reduce::Mean && count > 0) ? 1.0 / count : 1.0;
    if (factor != 1.0)
        for (double& v : out.data) v *= factor;
    return x.tape().record(std::move(out), {x}, [x, axis, factor](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(x);
        for (std::size_t i = 0; i < acc->rows; ++i)
            for (std::size_t c = 0; c < acc->cols; ++c) {
                const double gi = axis == Axis::All ? g.data[0] : axis == Axis::Rows ? g.data[i] : g.data[c];
                (*acc)(i, c) += factor * gi;
            }
    });
}

inline Tensor sum(Tensor x) { return reduce(x, Reduce::Sum, Axis::All); }
inline Tensor mean(Tensor x) { return reduce(x, Reduce::Mean, Axis::All); }

/// Inverted dropout: survivors scaled by 1/(1-p). Identity when !training or p == 0.
inline Tensor dropout(Tensor x, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const Matrix& xv = x.value();
    Matrix mask(xv.rows, xv.cols);
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& m : mask.data) m = rng.bernoulli(p) ? 0.0 : keep_scale;
    Matrix out = xv;
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] *= mask.data[k];
    return x.tape().record(std::move(out), {x}, [x, m = std::move(mask)](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(x);
        for (std::size_t k = 0; k < g.size(); ++k) acc->data[k] += g.data[k] * m.data[k];
    });
}

/// Identity forward; backward multiplies the incoming gradient by -lambda.
inline Tensor grad_reverse(Tensor x, double lambda) {
    if (lambda < 0) throw ConfigError("gradient reversal lambda must be nonnegative");
    Matrix out = x.value();
    return x.tape().record(std::move(out), {x}, [x, lambda](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(x);
        for (std::size_t k = 0; k < g.size(); ++k) acc->data[k] -= lambda * g.data[k];
    });
}

/// Each row divided by its L2 norm. Zero rows raise ValidationError.
inline Tensor l2_normalize_rows(Tensor x) {
    const Matrix& xv = x.value();
    Matrix out(xv.rows, xv.cols);
    std::vector<double> norms(xv.rows);
    for (std::size_t i = 0; i < xv.rows; ++i) {
        double s = 0.0;
        for (double v : xv.row(i)) s += v * v;
        norms[i] = std::sqrt(s);
        if (!(norms[i] > 0)) throw ValidationError("zero-norm row " + std::to_string(i) + " cannot be normalized");
        for (std::size_t c = 0; c < xv.cols; ++c) out(i, c) = xv(i, c) / norms[i];
    }
    Matrix saved = out;
    return x.tape().record(std::move(out), {x}, [x, u = std::move(saved), norms](Tape& tp, const Matrix& g) {
        Matrix* acc = tp.accumulator(x);
        for (std::size_t i = 0; i < g.rows; ++i) {
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols; ++c) dot += g(i, c) * u(i, c);
            for (std::size_t c = 0; c < g.cols; ++c) (*acc)(i, c) += (g(i, c) - dot * u(i, c)) / norms[i];
        }
    });
}

}  // namespace gda
