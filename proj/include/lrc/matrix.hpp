// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace lrc {

/// dense real matrix, row-major, double precision
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    /// pointer to the start of row i
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool operator==(const Matrix& other) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// x^T x, exact symmetry by construction
Matrix crossprod(const Matrix& x);

double frobenius_sq(const Matrix& a);
double frobenius(const Matrix& a);
double max_abs(const Matrix& a);
bool all_finite(const Matrix& a);

double col_norm_sq(const Matrix& a, std::size_t j);
double row_norm_sq(const Matrix& a, std::size_t i);
std::vector<double> diagonal(const Matrix& a);

/// rows [r0, r1) as a copy
Matrix slice_rows(const Matrix& a, std::size_t r0, std::size_t r1);
/// columns [c0, c1) as a copy
Matrix slice_cols(const Matrix& a, std::size_t c0, std::size_t c1);
Matrix select_rows(const Matrix& a, const std::vector<std::size_t>& idx);
Matrix select_cols(const Matrix& a, const std::vector<std::size_t>& idx);

Matrix vstack(const std::vector<Matrix>& blocks);
Matrix hstack(const std::vector<Matrix>& blocks);

} // namespace lrc
