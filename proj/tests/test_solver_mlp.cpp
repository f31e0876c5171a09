// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lrc/cur.hpp"
#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"
#include "lrc/rng.hpp"
#include "lrc/solver_mlp.hpp"
#include "test_util.hpp"

using namespace lrc;

TEST_CASE("selection keeps the rows with the largest whitened mass") {
    // diagonal statistics make the scores explicit: lambda_i = r_d(i,i) |wd_i|^2
    Matrix r_d(4, 4);
    r_d(0, 0) = 1.0;
    r_d(1, 1) = 9.0;
    r_d(2, 2) = 4.0;
    r_d(3, 3) = 1.0;
    const Matrix wd = Matrix::from_rows(
        {{1.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}, {0.5, 0.5}});
    // masses: 1, 9, 16, 0.5

    const MlpSolution sol = mlp_cur_select(r_d, wd, 2);
    CHECK(sol.selected == std::vector<std::size_t>{1, 2});
    CHECK(sol.u_values == std::vector<double>{1.0, 1.0});
    CHECK(sol.scale_mode == CurScaleMode::none);

    const Matrix s = psd_sqrt(r_d, 0.0);
    CHECK(test::rel_err(sol.objective_value,
                        selection_objective(s, wd, sol.selected)) < 1e-12);
}

TEST_CASE("ties resolve to the lowest index") {
    const Matrix r_d = Matrix::identity(3);
    const Matrix wd = Matrix::from_rows({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}});
    const MlpSolution sol = mlp_cur_select(r_d, wd, 2);
    CHECK(sol.selected == std::vector<std::size_t>{0, 1});
}

TEST_CASE("objective matches the direct masked residual") {
    Rng rng(801);
    const Matrix r_d = random_covariance(6, 20.0, rng);
    const Matrix wd = rng.gaussian_matrix(6, 4);
    const MlpSolution sol = mlp_cur_select(r_d, wd, 3);

    Matrix masked(6, 4);
    for (std::size_t i : sol.selected)
        for (std::size_t j = 0; j < 4; ++j) masked(i, j) = wd(i, j);
    const Matrix s = psd_sqrt(r_d, 0.0);
    const double direct = frobenius_sq(multiply(s, masked - wd));
    CHECK(test::rel_err(sol.objective_value, direct) < 1e-10);

    // keeping every row is exact
    CHECK(mlp_cur_select(r_d, wd, 6).objective_value == 0.0);
}

TEST_CASE("objective is non-increasing in the kept count") {
    Rng rng(802);
    const Matrix r_d = random_covariance(8, 30.0, rng);
    const Matrix wd = rng.gaussian_matrix(8, 5);
    double prev = 1e300;
    for (std::size_t r = 1; r <= 8; ++r) {
        const double obj = mlp_cur_select(r_d, wd, r).objective_value;
        CHECK(obj <= prev + 1e-12);
        prev = obj;
    }
}

TEST_CASE("rescaled selection folds the weights into the kept rows") {
    Rng rng(803);
    const Matrix r_d = random_covariance(5, 10.0, rng);
    const Matrix wd = rng.gaussian_matrix(5, 3);
    const MlpSolution sol = mlp_cur_select(r_d, wd, 2, CurScaleMode::monte_carlo);
    CHECK(sol.scale_mode == CurScaleMode::monte_carlo);

    const Matrix s = psd_sqrt(r_d, 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t row = sol.selected[i];
        const double lambda = col_norm_sq(s, row) * row_norm_sq(wd, row);
        CHECK(sol.u_values[i] == doctest::Approx(1.0 / (2.0 * lambda)).epsilon(1e-12));
    }
    CHECK(test::rel_err(sol.objective_value,
                        selection_objective(s, wd, sol.selected, &sol.u_values)) < 1e-12);
}

TEST_CASE("compression slices the projections consistently") {
    Rng rng(804);
    const Matrix wu = rng.gaussian_matrix(4, 6);
    const Matrix wg = rng.gaussian_matrix(4, 6);
    const Matrix wd = rng.gaussian_matrix(6, 4);
    MlpSolution sol;
    sol.selected = {1, 3, 4};
    sol.u_values = {1.0, 2.0, 0.5};

    const MlpCompressed out = compress_mlp(wu, wg, wd, sol);
    CHECK(out.wu == select_cols(wu, sol.selected));
    CHECK(out.wg == select_cols(wg, sol.selected));
    REQUIRE(out.wd.rows() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(out.wd(i, j) == doctest::Approx(sol.u_values[i] * wd(sol.selected[i], j)));

    const MlpCompressed ungated = compress_mlp(wu, Matrix(), wd, sol);
    CHECK(ungated.wg.empty());

    MlpSolution bad = sol;
    bad.u_values.pop_back();
    CHECK_THROWS_AS(compress_mlp(wu, wg, wd, bad), ArgumentError);
    CHECK_THROWS_AS(compress_mlp(rng.gaussian_matrix(4, 5), wg, wd, sol), ArgumentError);
}

TEST_CASE("batch objective equals the compressed-versus-original output gap") {
    ModelConfig cfg;
    cfg.d_m = 4;
    cfg.h_q = 1;
    cfg.h_kv = 1;
    cfg.d_qk = 3;
    cfg.d_vo = 3;
    cfg.d_inter = 6;
    cfg.mlp = MlpVariant::gated_silu;

    Rng rng(805);
    LayerWeights w;
    w.wq.push_back(rng.gaussian_matrix(4, 3));
    w.wk.push_back(rng.gaussian_matrix(4, 3));
    w.wv.push_back(rng.gaussian_matrix(4, 3));
    w.wo.push_back(rng.gaussian_matrix(3, 4));
    w.wu = rng.gaussian_matrix(4, 6);
    w.wg = rng.gaussian_matrix(4, 6);
    w.wd = rng.gaussian_matrix(6, 4);

    std::vector<ActivationBatch> batches;
    for (int b = 0; b < 2; ++b) {
        ActivationBatch batch;
        batch.x = rng.gaussian_matrix(5, 4);
        batch.positions = {0, 1, 2, 3, 4};
        batches.push_back(std::move(batch));
    }

    MlpSolution sol;
    sol.selected = {0, 2, 5};
    sol.u_values = {1.0, 1.0, 1.0};
    const double reported = mlp_objective_batches(w, cfg, sol, batches);

    // the kept-column layer produces the same outputs as the masked one
    LayerWeights reduced = w;
    const MlpCompressed c = compress_mlp(w.wu, w.wg, w.wd, sol);
    reduced.wu = c.wu;
    reduced.wg = c.wg;
    reduced.wd = c.wd;
    double direct = 0.0;
    for (const auto& batch : batches) {
        const Matrix attn = attention_output(w, cfg, batch);
        const Matrix gap = mlp_forward(w, cfg, attn).y - mlp_forward(reduced, cfg, attn).y;
        direct += frobenius_sq(gap);
    }
    CHECK(test::rel_err(reported, direct / 10.0) < 1e-10);

    CHECK_THROWS_AS(mlp_objective_batches(w, cfg, sol, {}), ArgumentError);
}

TEST_CASE("monte carlo estimate agrees with the closed form") {
    Rng rng(806);
    const Matrix wd = rng.gaussian_matrix(4, 3);
    const Matrix cov_d = random_covariance(4, 6.0, rng);
    MlpSolution sol;
    sol.selected = {0, 2};
    sol.u_values = {1.0, 1.0};

    Matrix masked(4, 3);
    for (std::size_t i : sol.selected)
        for (std::size_t j = 0; j < 3; ++j) masked(i, j) = wd(i, j);
    const double closed = frobenius_sq(multiply(psd_sqrt(cov_d, 0.0), masked - wd));

    const McEstimate est = mlp_objective_mc(wd, sol, cov_d, 200000, 31);
    CHECK(std::fabs(est.mean - closed) < 5.0 * est.std_error);
    CHECK(est.std_error > 0.0);

    // deterministic in the seed
    CHECK(mlp_objective_mc(wd, sol, cov_d, 1000, 9).mean ==
          mlp_objective_mc(wd, sol, cov_d, 1000, 9).mean);

    CHECK_THROWS_AS(mlp_objective_mc(wd, sol, cov_d, 0, 1), ArgumentError);
    CHECK_THROWS_AS(mlp_objective_mc(wd, sol, random_covariance(3, 2.0, rng), 10, 1),
                    ArgumentError);
}

TEST_CASE("selection rejects malformed input") {
    Rng rng(807);
    const Matrix r_d = random_covariance(4, 3.0, rng);
    const Matrix wd = rng.gaussian_matrix(4, 2);
    CHECK_THROWS_AS(mlp_cur_select(r_d, wd, 0), ArgumentError);
    CHECK_THROWS_AS(mlp_cur_select(r_d, wd, 5), ArgumentError);
    CHECK_THROWS_AS(mlp_cur_select(random_covariance(3, 2.0, rng), wd, 2), ArgumentError);
}
