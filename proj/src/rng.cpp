// SPDX-License-Identifier: Apache-2.0
#include "lrc/rng.hpp"

#include <cmath>
#include <numbers>

#include "lrc/errors.hpp"

namespace lrc {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] keeps the log finite
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

Matrix Rng::gaussian_matrix(std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = stddev * gaussian();
    return m;
}

Matrix random_orthogonal(std::size_t n, Rng& rng) {
    Matrix g = rng.gaussian_matrix(n, n);
    // modified Gram-Schmidt with one re-orthogonalization pass
    Matrix q(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = g(i, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += q(i, k) * v[i];
                for (std::size_t i = 0; i < n; ++i) v[i] -= dot * q(i, k);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw NumericError("random_orthogonal: degenerate draw");
        for (std::size_t i = 0; i < n; ++i) q(i, j) = v[i] / norm;
    }
    return q;
}

Matrix random_covariance(std::size_t n, double eigenvalue_ratio, Rng& rng) {
    if (n == 0) throw ArgumentError("random_covariance: empty dimension");
    if (eigenvalue_ratio < 1.0) throw ArgumentError("random_covariance: ratio must be >= 1");
    Matrix q = random_orthogonal(n, rng);
    std::vector<double> lambda(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
        lambda[i] = std::pow(eigenvalue_ratio, -t);
    }
    Matrix cov(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += q(i, k) * lambda[k] * q(j, k);
            cov(i, j) = s;
            cov(j, i) = s;
        }
    return cov;
}

std::vector<double> GaussianSampler::sample_row(Rng& rng) const {
    const std::size_t d = root_.rows();
    std::vector<double> z(d);
    for (std::size_t i = 0; i < d; ++i) z[i] = rng.gaussian();
    std::vector<double> x(root_.cols(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double zi = z[i];
        const double* r = root_.row(i);
        for (std::size_t j = 0; j < root_.cols(); ++j) x[j] += zi * r[j];
    }
    return x;
}

Matrix GaussianSampler::sample(std::size_t t, Rng& rng) const {
    Matrix out(t, root_.cols());
    for (std::size_t i = 0; i < t; ++i) {
        const auto row = sample_row(rng);
        for (std::size_t j = 0; j < row.size(); ++j) out(i, j) = row[j];
    }
    return out;
}

} // namespace lrc
