// SPDX-License-Identifier: Apache-2.0
#include "lrc/matrix.hpp"

#include <cmath>
#include <string>

#include "lrc/errors.hpp"

namespace lrc {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ArgumentError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
    }
}

} // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows.begin()->size() : 0;
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ArgumentError("from_rows: ragged rows");
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out.data()[k] = a.data()[k] + b.data()[k];
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out.data()[k] = a.data()[k] - b.data()[k];
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out.data()[k] = s * a.data()[k];
    return out;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ArgumentError("multiply: inner dims " + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix crossprod(const Matrix& x) {
    const std::size_t d = x.cols();
    Matrix out(d, d);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        const double* r = x.row(t);
        for (std::size_t i = 0; i < d; ++i) {
            const double ri = r[i];
            if (ri == 0.0) continue;
            for (std::size_t j = i; j < d; ++j) out(i, j) += ri * r[j];
        }
    }
    // mirror the upper triangle so symmetry is exact
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) out(i, j) = out(j, i);
    return out;
}

double frobenius_sq(const Matrix& a) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a.data()[k] * a.data()[k];
    return s;
}

double frobenius(const Matrix& a) { return std::sqrt(frobenius_sq(a)); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a.data()[k]));
    return m;
}

bool all_finite(const Matrix& a) {
    for (std::size_t k = 0; k < a.size(); ++k)
        if (!std::isfinite(a.data()[k])) return false;
    return true;
}

double col_norm_sq(const Matrix& a, std::size_t j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
    return s;
}

double row_norm_sq(const Matrix& a, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
    return s;
}

std::vector<double> diagonal(const Matrix& a) {
    const std::size_t n = std::min(a.rows(), a.cols());
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a(i, i);
    return d;
}

Matrix slice_rows(const Matrix& a, std::size_t r0, std::size_t r1) {
    if (r0 > r1 || r1 > a.rows()) throw ArgumentError("slice_rows: bad range");
    Matrix out(r1 - r0, a.cols());
    for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i - r0, j) = a(i, j);
    return out;
}

Matrix slice_cols(const Matrix& a, std::size_t c0, std::size_t c1) {
    if (c0 > c1 || c1 > a.cols()) throw ArgumentError("slice_cols: bad range");
    Matrix out(a.rows(), c1 - c0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
    return out;
}

Matrix select_rows(const Matrix& a, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows()) throw ArgumentError("select_rows: index out of range");
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(idx[i], j);
    }
    return out;
}

Matrix select_cols(const Matrix& a, const std::vector<std::size_t>& idx) {
    Matrix out(a.rows(), idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] >= a.cols()) throw ArgumentError("select_cols: index out of range");
        for (std::size_t i = 0; i < a.rows(); ++i) out(i, j) = a(i, idx[j]);
    }
    return out;
}

Matrix vstack(const std::vector<Matrix>& blocks) {
    if (blocks.empty()) return Matrix();
    const std::size_t cols = blocks.front().cols();
    std::size_t rows = 0;
    for (const auto& b : blocks) {
        if (b.cols() != cols) throw ArgumentError("vstack: column mismatch");
        rows += b.rows();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < b.rows(); ++i)
            for (std::size_t j = 0; j < cols; ++j) out(at + i, j) = b(i, j);
        at += b.rows();
    }
    return out;
}

Matrix hstack(const std::vector<Matrix>& blocks) {
    if (blocks.empty()) return Matrix();
    const std::size_t rows = blocks.front().rows();
    std::size_t cols = 0;
    for (const auto& b : blocks) {
        if (b.rows() != rows) throw ArgumentError("hstack: row mismatch");
        cols += b.cols();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, at + j) = b(i, j);
        at += b.cols();
    }
    return out;
}

} // namespace lrc
