// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "lrc/matrix.hpp"

namespace lrc {

/// thin SVD, a = u * diag(sigma) * vt, sigma sorted descending
struct SvdFactors {
    Matrix u;                  // m x k, orthonormal columns
    std::vector<double> sigma; // k = min(m, n), non-negative
    Matrix vt;                 // k x n, orthonormal rows
};

/// one-sided Jacobi; throws NumericError with dims + sweep count on non-convergence
SvdFactors svd(const Matrix& a);

/// rank-r factors (u_r, diag(sigma_r) * vt_r); product is the best rank-r
/// Frobenius approximation of a
std::pair<Matrix, Matrix> truncated_svd(const Matrix& a, std::size_t r);

/// symmetric eigendecomposition, values sorted descending
struct EighFactors {
    std::vector<double> values;
    Matrix vectors; // columns are eigenvectors
};

/// cyclic Jacobi for symmetric input; symmetry is the caller's contract
EighFactors eigh(const Matrix& s);

/// symmetric PSD square root of r + damping * mean(diag(r)) * I;
/// eigenvalues below a small negative tolerance are a degeneracy error,
/// tiny negatives clamp to zero
Matrix psd_sqrt(const Matrix& r, double damping = 0.0);

/// inverse of psd_sqrt with eigenvalues below 1e-12 * lambda_max
/// pseudo-inverted to zero
Matrix psd_inv_sqrt(const Matrix& r, double damping = 0.0);

} // namespace lrc
