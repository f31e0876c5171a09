// SPDX-License-Identifier: Apache-2.0
#include "lrc/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lrc/errors.hpp"

namespace lrc {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kJacobiTol = 1e-15;

void require_finite(const Matrix& a, const char* op) {
    if (!all_finite(a)) throw ArgumentError(std::string(op) + ": non-finite input");
}

/// fill zero-norm columns of u with an orthonormal completion
void complete_basis(Matrix& u, const std::vector<std::size_t>& null_cols) {
    const std::size_t m = u.rows();
    const std::size_t k = u.cols();
    for (std::size_t j : null_cols) {
        for (std::size_t cand = 0; cand < m; ++cand) {
            std::vector<double> v(m, 0.0);
            v[cand] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < k; ++c) {
                    if (c == j) continue;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += u(i, c) * v[i];
                    for (std::size_t i = 0; i < m; ++i) v[i] -= dot * u(i, c);
                }
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = v[i] / norm;
                break;
            }
        }
    }
}

/// one-sided Jacobi on b (m >= n): rotates columns until mutually orthogonal,
/// accumulating rotations into v
SvdFactors svd_tall(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix b = a;
    Matrix v = Matrix::identity(n);

    // column norms below this are numeric noise; rotating them never converges
    const double col_tol =
        std::sqrt(frobenius_sq(b)) * static_cast<double>(std::max(m, n)) * 1e-16;
    const double col_tol_sq = col_tol * col_tol;

    bool converged = false;
    int sweeps = 0;
    for (; sweeps < kMaxSweeps && !converged; ++sweeps) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += b(i, p) * b(i, p);
                    beta += b(i, q) * b(i, q);
                    gamma += b(i, p) * b(i, q);
                }
                if (alpha <= col_tol_sq || beta <= col_tol_sq) continue;
                if (std::fabs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged) {
        throw NumericError("svd: no convergence for " + std::to_string(m) + "x" +
                           std::to_string(n) + " after " + std::to_string(sweeps) + " sweeps");
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(col_norm_sq(b, j));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    const double null_tol = std::max(col_tol, 0.0);

    SvdFactors f;
    f.u = Matrix(m, n);
    f.vt = Matrix(n, n);
    f.sigma.resize(n);
    std::vector<std::size_t> null_cols;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        f.sigma[j] = sigma[src];
        if (sigma[src] <= null_tol) {
            // direction is noise at this scale; orthonormal completion below
            null_cols.push_back(j);
        } else {
            for (std::size_t i = 0; i < m; ++i) f.u(i, j) = b(i, src) / sigma[src];
        }
        for (std::size_t i = 0; i < n; ++i) f.vt(j, i) = v(i, src);
    }
    complete_basis(f.u, null_cols);
    return f;
}

void require_square(const Matrix& r, const char* op) {
    if (r.rows() != r.cols() || r.rows() == 0) {
        throw ArgumentError(std::string(op) + ": need square non-empty input, got " +
                            std::to_string(r.rows()) + "x" + std::to_string(r.cols()));
    }
}

void require_symmetric(const Matrix& r, const char* op) {
    const double tol = 1e-8 * std::max(1.0, max_abs(r));
    for (std::size_t i = 0; i < r.rows(); ++i)
        for (std::size_t j = i + 1; j < r.cols(); ++j)
            if (std::fabs(r(i, j) - r(j, i)) > tol) {
                throw ArgumentError(std::string(op) + ": input not symmetric at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
            }
}

/// spectral map f(lambda) applied through the eigenbasis; output symmetrized
Matrix spectral_apply(const EighFactors& e, const std::vector<double>& mapped) {
    const std::size_t n = e.vectors.rows();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += e.vectors(i, k) * mapped[k] * e.vectors(j, k);
            out(i, j) = s;
            out(j, i) = s;
        }
    return out;
}

/// symmetrize, damp, decompose and screen negatives; shared by both roots
EighFactors damped_eigh(const Matrix& r, double damping, const char* op) {
    require_square(r, op);
    require_finite(r, op);
    require_symmetric(r, op);
    if (damping < 0.0) throw ArgumentError(std::string(op) + ": negative damping");

    const std::size_t n = r.rows();
    Matrix rs(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) rs(i, j) = 0.5 * (r(i, j) + r(j, i));
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_diag += rs(i, i);
    mean_diag /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) rs(i, i) += damping * mean_diag;

    EighFactors e = eigh(rs);
    const double lmax = e.values.empty() ? 0.0 : std::max(0.0, e.values.front());
    const double neg_tol = 1e-8 * std::max(1.0, lmax);
    for (double& lambda : e.values) {
        if (lambda < -neg_tol) {
            throw NumericError(std::string(op) + ": degenerate input, eigenvalue " +
                               std::to_string(lambda));
        }
        lambda = std::max(lambda, 0.0);
    }
    return e;
}

} // namespace

SvdFactors svd(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) throw ArgumentError("svd: empty input");
    require_finite(a, "svd");
    if (a.rows() >= a.cols()) return svd_tall(a);
    SvdFactors t = svd_tall(transpose(a));
    SvdFactors f;
    f.sigma = std::move(t.sigma);
    f.u = transpose(t.vt);
    f.vt = transpose(t.u);
    return f;
}

std::pair<Matrix, Matrix> truncated_svd(const Matrix& a, std::size_t r) {
    const std::size_t k = std::min(a.rows(), a.cols());
    if (r < 1 || r > k) {
        throw ArgumentError("truncated_svd: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(k) + "]");
    }
    SvdFactors f = svd(a);
    Matrix left = slice_cols(f.u, 0, r);
    Matrix right(r, a.cols());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) right(i, j) = f.sigma[i] * f.vt(i, j);
    return {std::move(left), std::move(right)};
}

EighFactors eigh(const Matrix& s) {
    require_square(s, "eigh");
    require_finite(s, "eigh");
    const std::size_t n = s.rows();
    Matrix a = s;
    Matrix v = Matrix::identity(n);

    auto off_norm = [&]() {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) sum += a(i, j) * a(i, j);
        return std::sqrt(2.0 * sum);
    };

    const double stop = kJacobiTol * std::max(1.0, frobenius(a));
    int sweeps = 0;
    while (off_norm() > stop) {
        if (++sweeps > kMaxSweeps) {
            throw NumericError("eigh: no convergence for " + std::to_string(n) + "x" +
                               std::to_string(n) + " after " + std::to_string(sweeps) + " sweeps");
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double zeta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = c * t;
                const double apq = a(p, q);
                const double app = a(p, p), aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(p, k) = a(k, p);
                    a(k, q) = sn * akp + c * akq;
                    a(q, k) = a(k, q);
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EighFactors f;
    f.values.resize(n);
    f.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        f.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) f.vectors(i, j) = v(i, order[j]);
    }
    return f;
}

Matrix psd_sqrt(const Matrix& r, double damping) {
    EighFactors e = damped_eigh(r, damping, "psd_sqrt");
    std::vector<double> mapped(e.values.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) mapped[i] = std::sqrt(e.values[i]);
    return spectral_apply(e, mapped);
}

Matrix psd_inv_sqrt(const Matrix& r, double damping) {
    EighFactors e = damped_eigh(r, damping, "psd_inv_sqrt");
    const double lmax = e.values.empty() ? 0.0 : e.values.front();
    const double cutoff = 1e-12 * lmax;
    std::vector<double> mapped(e.values.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        mapped[i] = e.values[i] <= cutoff ? 0.0 : 1.0 / std::sqrt(e.values[i]);
    }
    return spectral_apply(e, mapped);
}

} // namespace lrc
