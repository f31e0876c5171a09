// SPDX-License-Identifier: Apache-2.0
#include "lrc/calibration.hpp"

#include <string>

#include "lrc/errors.hpp"

namespace lrc {

void accumulate(CorrAccumulator& acc, const Matrix& x) {
    if (x.cols() != acc.sum_outer.rows())
        throw ArgumentError("accumulate: width " + std::to_string(x.cols()) + " != dim " +
                            std::to_string(acc.sum_outer.rows()));
    if (!all_finite(x)) throw ArgumentError("accumulate: non-finite input");
    acc.sum_outer = acc.sum_outer + crossprod(x);
    acc.count += x.rows();
}

void merge(CorrAccumulator& into, const CorrAccumulator& other) {
    if (into.sum_outer.rows() != other.sum_outer.rows())
        throw ArgumentError("merge: accumulator dimensions differ");
    into.sum_outer = into.sum_outer + other.sum_outer;
    into.count += other.count;
}

Matrix finalize(const CorrAccumulator& acc) {
    if (acc.count == 0) throw NumericError("finalize: no samples accumulated");
    return (1.0 / static_cast<double>(acc.count)) * acc.sum_outer;
}

LayerStats collect_layer_stats(const LayerWeights& w, const ModelConfig& cfg,
                               const std::vector<ActivationBatch>& batches,
                               const std::vector<ActivationBatch>* kv_batches,
                               bool collect_p_cat) {
    validate_weights(w, cfg);
    if (batches.empty()) throw ArgumentError("collect_layer_stats: no batches");

    CorrAccumulator acc_qq(cfg.d_m);
    CorrAccumulator acc_kv(cfg.d_m);
    std::vector<CorrAccumulator> acc_p(cfg.h_q, CorrAccumulator(cfg.d_m));
    CorrAccumulator acc_d(w.wu.cols());
    CorrAccumulator acc_pcat(collect_p_cat ? cfg.h_q * cfg.d_m : 1);

    for (const auto& batch : batches) {
        accumulate(acc_qq, batch.x);
        if (kv_batches == nullptr) accumulate(acc_kv, batch.x);

        std::vector<Matrix> contexts(cfg.h_q);
        for (std::size_t i = 0; i < cfg.h_q; ++i) {
            const HeadScores scores = attention_scores(w, cfg, batch, i);
            contexts[i] = attention_context(scores, batch.x);
            accumulate(acc_p[i], contexts[i]);
        }
        if (collect_p_cat) accumulate(acc_pcat, hstack(contexts));

        const Matrix attn = attention_output(w, cfg, batch);
        accumulate(acc_d, mlp_forward(w, cfg, attn).hidden);
    }
    if (kv_batches != nullptr) {
        for (const auto& batch : *kv_batches) accumulate(acc_kv, batch.x);
    }

    LayerStats stats;
    stats.r_qq = finalize(acc_qq);
    stats.r_kv = finalize(acc_kv);
    stats.r_p.reserve(cfg.h_q);
    for (std::size_t i = 0; i < cfg.h_q; ++i) stats.r_p.push_back(finalize(acc_p[i]));
    stats.r_d = finalize(acc_d);
    if (collect_p_cat) stats.r_p_cat = finalize(acc_pcat);
    stats.sample_count = acc_qq.count;
    return stats;
}

} // namespace lrc
