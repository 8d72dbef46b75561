#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "gda/error.hpp"

namespace gda {

/// Allocator with a fixed alignment. Vectorized Eigen kernels peel to the
/// buffer's alignment, so a fixed alignment keeps their summation order, and
/// hence every result bit, independent of where the heap placed the buffer.
template <class T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{Align}));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{Align}); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U, Align>&) noexcept {
        return true;
    }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major matrix of doubles. Plain value type; the autodiff tape
/// stores these as node values and gradients.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Buffer data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows = init.size();
        cols = rows ? init.begin()->size() : 0;
        data.reserve(rows * cols);
        for (const auto& row : init) {
            if (row.size() != cols) throw ShapeError("ragged matrix initializer");
            data.insert(data.end(), row.begin(), row.end());
        }
    }

    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c, 0.0); }
    static Matrix ones(std::size_t r, std::size_t c) { return Matrix(r, c, 1.0); }
    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix column(std::span<const double> v) {
        Matrix m(v.size(), 1);
        std::copy(v.begin(), v.end(), m.data.begin());
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    std::size_t size() const noexcept { return data.size(); }
    bool same_shape(const Matrix& o) const noexcept { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

/// Compressed sparse row matrix. Column indices are strictly ascending within a row.
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_offsets{0};
    std::vector<std::uint32_t> col_indices;
    std::vector<double> values;

    std::size_t nnz() const noexcept { return col_indices.size(); }

    std::size_t row_begin(std::size_t i) const { return row_offsets[i]; }
    std::size_t row_end(std::size_t i) const { return row_offsets[i + 1]; }

    /// Throws ValidationError if the CSR layout is inconsistent.
    void validate() const {
        if (row_offsets.size() != rows + 1 || row_offsets.front() != 0 ||
            row_offsets.back() != col_indices.size() || values.size() != col_indices.size())
            throw ValidationError("CSR offsets inconsistent with entry count");
        for (std::size_t i = 0; i < rows; ++i) {
            if (row_offsets[i] > row_offsets[i + 1]) throw ValidationError("CSR offsets decreasing");
            for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
                if (col_indices[k] >= cols) throw ValidationError("CSR column index out of range");
                if (k > row_offsets[i] && col_indices[k] <= col_indices[k - 1])
                    throw ValidationError("CSR columns not strictly ascending in row " + std::to_string(i));
            }
        }
    }

    Matrix to_dense() const {
        Matrix d(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) d(i, col_indices[k]) = values[k];
        return d;
    }
};

/// Shared immutable handle to a sparse operator (normalized adjacency etc.).
using SparseMatrixRef = std::shared_ptr<const CsrMatrix>;

}  // namespace gda
