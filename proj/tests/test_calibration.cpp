// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "doctest.h"
#include "lrc/calibration.hpp"
#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"
#include "lrc/model.hpp"
#include "lrc/rng.hpp"
#include "test_util.hpp"

using namespace lrc;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d_m = 5;
    cfg.h_q = 2;
    cfg.h_kv = 1;
    cfg.d_qk = 4;
    cfg.d_vo = 3;
    cfg.d_inter = 6;
    cfg.rope = true;
    cfg.mlp = MlpVariant::gated_silu;
    return cfg;
}

LayerWeights tiny_weights(const ModelConfig& cfg, Rng& rng) {
    LayerWeights w;
    for (std::size_t i = 0; i < cfg.h_q; ++i) w.wq.push_back(rng.gaussian_matrix(cfg.d_m, cfg.d_qk));
    for (std::size_t j = 0; j < cfg.h_kv; ++j) w.wk.push_back(rng.gaussian_matrix(cfg.d_m, cfg.d_qk));
    for (std::size_t j = 0; j < cfg.h_kv; ++j) w.wv.push_back(rng.gaussian_matrix(cfg.d_m, cfg.d_vo));
    for (std::size_t i = 0; i < cfg.h_q; ++i) w.wo.push_back(rng.gaussian_matrix(cfg.d_vo, cfg.d_m));
    w.wu = rng.gaussian_matrix(cfg.d_m, cfg.d_inter);
    w.wg = rng.gaussian_matrix(cfg.d_m, cfg.d_inter);
    w.wd = rng.gaussian_matrix(cfg.d_inter, cfg.d_m);
    return w;
}

std::vector<ActivationBatch> make_batches(const ModelConfig& cfg, std::size_t n, std::size_t t,
                                          Rng& rng) {
    std::vector<ActivationBatch> out;
    for (std::size_t b = 0; b < n; ++b) {
        ActivationBatch batch;
        batch.x = rng.gaussian_matrix(t, cfg.d_m);
        for (std::size_t i = 0; i < t; ++i) batch.positions.push_back(i);
        out.push_back(std::move(batch));
    }
    return out;
}

} // namespace

TEST_CASE("accumulator matches the direct second moment") {
    const Matrix x = Matrix::from_rows({{1.0, 2.0}, {3.0, -1.0}, {0.5, 0.0}});
    CorrAccumulator acc(2);
    accumulate(acc, slice_rows(x, 0, 2));
    accumulate(acc, slice_rows(x, 2, 3));
    CHECK(acc.count == 3);
    const Matrix want = (1.0 / 3.0) * crossprod(x);
    CHECK(test::max_abs_diff(finalize(acc), want) < 1e-15);

    CorrAccumulator left(2), right(2);
    accumulate(left, slice_rows(x, 0, 1));
    accumulate(right, slice_rows(x, 1, 3));
    merge(left, right);
    CHECK(left.count == 3);
    CHECK(test::max_abs_diff(finalize(left), want) < 1e-15);
}

TEST_CASE("accumulator rejects misuse") {
    CorrAccumulator acc(3);
    CHECK_THROWS_AS(finalize(acc), NumericError);
    CHECK_THROWS_AS(accumulate(acc, Matrix(2, 2)), ArgumentError);
    Matrix bad(1, 3);
    bad(0, 1) = std::nan("");
    CHECK_THROWS_AS(accumulate(acc, bad), ArgumentError);
    CorrAccumulator other(2);
    CHECK_THROWS_AS(merge(acc, other), ArgumentError);
}

TEST_CASE("accumulated moment converges to the sampling covariance") {
    Rng rng(401);
    const Matrix cov = random_covariance(4, 50.0, rng);
    const GaussianSampler sampler(psd_sqrt(cov, 0.0));
    CorrAccumulator acc(4);
    for (int chunk = 0; chunk < 20; ++chunk) accumulate(acc, sampler.sample(5000, rng));
    const Matrix est = finalize(acc);
    CHECK(frobenius(est - cov) / frobenius(cov) < 0.05);
}

TEST_CASE("layer statistics match a direct reimplementation") {
    const ModelConfig cfg = tiny_config();
    Rng rng(402);
    const LayerWeights w = tiny_weights(cfg, rng);
    const auto batches = make_batches(cfg, 3, 8, rng);

    const LayerStats stats = collect_layer_stats(w, cfg, batches, nullptr, true);
    CHECK(stats.sample_count == 24);

    Matrix sum_qq(cfg.d_m, cfg.d_m);
    std::vector<Matrix> sum_p(cfg.h_q, Matrix(cfg.d_m, cfg.d_m));
    Matrix sum_pcat(cfg.h_q * cfg.d_m, cfg.h_q * cfg.d_m);
    Matrix sum_d(cfg.d_inter, cfg.d_inter);
    for (const auto& batch : batches) {
        sum_qq = sum_qq + crossprod(batch.x);
        std::vector<Matrix> ctx;
        for (std::size_t i = 0; i < cfg.h_q; ++i) {
            const HeadScores s = attention_scores(w, cfg, batch, i);
            ctx.push_back(attention_context(s, batch.x));
            sum_p[i] = sum_p[i] + crossprod(ctx[i]);
        }
        sum_pcat = sum_pcat + crossprod(hstack(ctx));
        sum_d = sum_d + crossprod(mlp_forward(w, cfg, attention_output(w, cfg, batch)).hidden);
    }
    const double inv = 1.0 / 24.0;
    CHECK(test::max_abs_diff(stats.r_qq, inv * sum_qq) < 1e-14);
    CHECK(test::max_abs_diff(stats.r_kv, inv * sum_qq) < 1e-14);
    for (std::size_t i = 0; i < cfg.h_q; ++i)
        CHECK(test::max_abs_diff(stats.r_p[i], inv * sum_p[i]) < 1e-14);
    CHECK(test::max_abs_diff(stats.r_p_cat, inv * sum_pcat) < 1e-14);
    CHECK(test::max_abs_diff(stats.r_d, inv * sum_d) < 1e-14);
}

TEST_CASE("distinct key/value stream feeds only the kv moment") {
    const ModelConfig cfg = tiny_config();
    Rng rng(403);
    const LayerWeights w = tiny_weights(cfg, rng);
    const auto batches = make_batches(cfg, 2, 6, rng);
    const auto kv_batches = make_batches(cfg, 4, 6, rng);

    const LayerStats stats = collect_layer_stats(w, cfg, batches, &kv_batches);
    CHECK(stats.r_p_cat.empty());

    Matrix sum_kv(cfg.d_m, cfg.d_m);
    std::size_t kv_rows = 0;
    for (const auto& batch : kv_batches) {
        sum_kv = sum_kv + crossprod(batch.x);
        kv_rows += batch.x.rows();
    }
    CHECK(test::max_abs_diff(stats.r_kv, (1.0 / static_cast<double>(kv_rows)) * sum_kv) < 1e-14);

    // query moment still comes from the primary stream
    Matrix sum_qq(cfg.d_m, cfg.d_m);
    for (const auto& batch : batches) sum_qq = sum_qq + crossprod(batch.x);
    CHECK(test::max_abs_diff(stats.r_qq, (1.0 / 12.0) * sum_qq) < 1e-14);

    CHECK_THROWS_AS(collect_layer_stats(w, cfg, {}), ArgumentError);
}

TEST_CASE("collected moments are symmetric and positive semidefinite") {
    const ModelConfig cfg = tiny_config();
    Rng rng(404);
    const LayerWeights w = tiny_weights(cfg, rng);
    const auto batches = make_batches(cfg, 2, 10, rng);
    const LayerStats stats = collect_layer_stats(w, cfg, batches);

    for (const Matrix* m : {&stats.r_qq, &stats.r_kv, &stats.r_p[0], &stats.r_p[1], &stats.r_d}) {
        CHECK(test::max_abs_diff(*m, transpose(*m)) == 0.0);
        const EighFactors e = eigh(*m);
        CHECK(e.values.back() > -1e-10 * std::max(1.0, e.values.front()));
    }
}
