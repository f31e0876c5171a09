// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lrc/decomp.hpp"
#include "lrc/rng.hpp"
#include "test_util.hpp"

using namespace lrc;

TEST_CASE("seeded streams reproduce and separate") {
    Rng a(42), b(42), c(43);
    bool all_same = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const double va = a.gaussian();
        all_same = all_same && va == b.gaussian();
        any_diff = any_diff || va != c.gaussian();
    }
    CHECK(all_same);
    CHECK(any_diff);
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) == mix_seed(1, 0));
}

TEST_CASE("uniform stays in [0, 1)") {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("gaussian moments are near standard") {
    Rng rng(11);
    const std::size_t n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum_sq += g * g;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sum_sq / n - 1.0) < 0.02);
}

TEST_CASE("random orthogonal has orthonormal columns") {
    Rng rng(5);
    const Matrix q = random_orthogonal(6, rng);
    CHECK(test::orthonormality_defect(q) < 1e-12);
}

TEST_CASE("random covariance is symmetric with the requested spread") {
    Rng rng(6);
    const Matrix cov = random_covariance(5, 100.0, rng);
    CHECK(test::max_abs_diff(cov, transpose(cov)) == 0.0);
    const EighFactors f = eigh(cov);
    CHECK(f.values.front() / f.values.back() == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(f.values.back() > 0.0);
}

TEST_CASE("gaussian sampler hits its target second moment") {
    Rng rng(12);
    const Matrix cov = random_covariance(4, 10.0, rng);
    GaussianSampler sampler(psd_sqrt(cov, 0.0));
    const std::size_t n = 100000;
    const Matrix x = sampler.sample(n, rng);
    const Matrix est = 1.0 / static_cast<double>(n) * crossprod(x);
    CHECK(test::rel_err(est, cov) < 0.05);
}
