// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "lrc/matrix.hpp"

namespace lrc {

/// splitmix64 step, used to derive independent sub-seeds
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// seeded generator with a platform-independent normal variate
/// (Box-Muller over mt19937_64, so byte-identical runs everywhere)
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// uniform in [0, 1)
    double uniform();
    /// standard normal
    double gaussian();

    Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);

  private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Haar-ish orthogonal matrix from QR of a Gaussian draw
Matrix random_orthogonal(std::size_t n, Rng& rng);

/// random covariance: orthogonal basis times a geometric spectrum with
/// largest/smallest eigenvalue ratio `eigenvalue_ratio` (>= 1)
Matrix random_covariance(std::size_t n, double eigenvalue_ratio, Rng& rng);

/// draws rows x = z * root with z standard normal, so E[x^T x] = root^T root
class GaussianSampler {
  public:
    explicit GaussianSampler(Matrix root) : root_(std::move(root)) {}

    /// one row vector of dimension root.cols()
    std::vector<double> sample_row(Rng& rng) const;
    /// t rows stacked
    Matrix sample(std::size_t t, Rng& rng) const;

    const Matrix& root() const { return root_; }

  private:
    Matrix root_;
};

} // namespace lrc
