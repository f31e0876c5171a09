// SPDX-License-Identifier: Apache-2.0
#include "lrc/solver_ov.hpp"

#include <string>

#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"

namespace lrc {

OvSolution solve_ov_mha(const Matrix& wv, const Matrix& wo, const Matrix& r_p, std::size_t r,
                        double damping) {
    const std::size_t d_m = wv.rows();
    const std::size_t d_vo = wv.cols();
    if (wo.rows() != d_vo || wo.cols() != d_m)
        throw ArgumentError("solve_ov: value/output shape mismatch");
    if (r_p.rows() != d_m) throw ArgumentError("solve_ov: statistics dimension != d_m");
    if (r < 1 || r > std::min(d_vo, d_m))
        throw ArgumentError("solve_ov: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(std::min(d_vo, d_m)) + "]");

    const Matrix s = psd_sqrt(r_p, damping);
    const Matrix s_inv = psd_inv_sqrt(r_p, damping);
    const Matrix fused = multiply(wv, wo);
    const Matrix whitened = multiply(s, fused);
    const SvdFactors f = svd(whitened);

    OvSolution sol;
    sol.variant = OvVariant::per_head;
    sol.wv_tilde = multiply(s_inv, slice_cols(f.u, 0, r));
    Matrix right(r, d_m);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d_m; ++j) right(i, j) = f.sigma[i] * f.vt(i, j);
    sol.wo_tilde.push_back(std::move(right));
    sol.effective_kv_dim = r;
    sol.objective_value =
        frobenius_sq(whitened - multiply(s, multiply(sol.wv_tilde, sol.wo_tilde[0])));
    return sol;
}

OvSolution solve_ov_gqa(const Matrix& wv_shared, const std::vector<Matrix>& wo_group,
                        const Matrix& r_kv, std::size_t r, double damping) {
    if (wo_group.empty()) throw ArgumentError("solve_ov: empty head group");
    const std::size_t d_m = wv_shared.rows();
    const std::size_t d_vo = wv_shared.cols();
    for (const auto& wo : wo_group) {
        if (wo.rows() != d_vo || wo.cols() != d_m)
            throw ArgumentError("solve_ov: value/output shape mismatch");
    }
    if (r_kv.rows() != d_m) throw ArgumentError("solve_ov: statistics dimension != d_m");
    if (r < 1 || r > std::min(d_vo, d_m))
        throw ArgumentError("solve_ov: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(std::min(d_vo, d_m)) + "]");

    const Matrix s = psd_sqrt(r_kv, damping);
    const Matrix s_inv = psd_inv_sqrt(r_kv, damping);
    const std::size_t g = wo_group.size();
    std::vector<Matrix> whitened(g);
    for (std::size_t i = 0; i < g; ++i)
        whitened[i] = multiply(s, multiply(wv_shared, wo_group[i]));

    const SvdFactors f = svd(hstack(whitened));

    OvSolution sol;
    sol.variant = OvVariant::gqa_joint;
    // sigma folds into the shared value factor so the per-head output
    // factors are plain vt blocks
    Matrix u_sigma(d_m, r);
    for (std::size_t i = 0; i < d_m; ++i)
        for (std::size_t j = 0; j < r; ++j) u_sigma(i, j) = f.u(i, j) * f.sigma[j];
    sol.wv_tilde = multiply(s_inv, u_sigma);
    sol.wo_tilde.resize(g);
    for (std::size_t i = 0; i < g; ++i)
        sol.wo_tilde[i] = slice_cols(slice_rows(f.vt, 0, r), i * d_m, (i + 1) * d_m);
    sol.effective_kv_dim = r;

    sol.objective_value = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        const Matrix approx = multiply(s, multiply(sol.wv_tilde, sol.wo_tilde[i]));
        sol.objective_value += frobenius_sq(whitened[i] - approx);
    }
    return sol;
}

OvSolution solve_ov_overall(const std::vector<Matrix>& wv_per_head,
                            const std::vector<Matrix>& wo_per_head, const Matrix& r_p_cat,
                            std::size_t r, double damping, std::size_t dim_limit) {
    if (wv_per_head.empty() || wv_per_head.size() != wo_per_head.size())
        throw ArgumentError("solve_ov_overall: head lists must match and be non-empty");
    const std::size_t h = wv_per_head.size();
    const std::size_t d_m = wv_per_head[0].rows();
    const std::size_t d_vo = wv_per_head[0].cols();
    const std::size_t d_cat = h * d_m;
    if (d_cat > dim_limit)
        throw ArgumentError("solve_ov_overall: concatenated dimension " + std::to_string(d_cat) +
                            " exceeds limit " + std::to_string(dim_limit));
    if (r_p_cat.rows() != d_cat)
        throw ArgumentError("solve_ov_overall: statistics dimension != heads * d_m");
    for (std::size_t i = 0; i < h; ++i) {
        if (wv_per_head[i].rows() != d_m || wv_per_head[i].cols() != d_vo ||
            wo_per_head[i].rows() != d_vo || wo_per_head[i].cols() != d_m)
            throw ArgumentError("solve_ov_overall: ragged head shapes");
    }
    if (r < 1 || r > std::min(d_cat, d_m))
        throw ArgumentError("solve_ov_overall: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(std::min(d_cat, d_m)) + "]");

    const Matrix s = psd_sqrt(r_p_cat, damping);
    const Matrix s_inv = psd_inv_sqrt(r_p_cat, damping);
    std::vector<Matrix> fused(h);
    for (std::size_t i = 0; i < h; ++i) fused[i] = multiply(wv_per_head[i], wo_per_head[i]);
    const Matrix whitened = multiply(s, vstack(fused));
    const SvdFactors f = svd(whitened);

    OvSolution sol;
    sol.variant = OvVariant::overall;
    sol.wv_tilde = multiply(s_inv, slice_cols(f.u, 0, r));
    Matrix shared(r, d_m);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d_m; ++j) shared(i, j) = f.sigma[i] * f.vt(i, j);
    sol.wo_tilde.push_back(std::move(shared));
    // every head caches its own r-wide value latent; the cache grows by
    // r/d_vo relative to the shared-value layout
    sol.effective_kv_dim = r;
    sol.objective_value =
        frobenius_sq(whitened - multiply(s, multiply(sol.wv_tilde, sol.wo_tilde[0])));
    return sol;
}

std::vector<OvErrorSample> ov_objective_mc(const LayerWeights& original,
                                           const LayerWeights& compressed,
                                           const ModelConfig& cfg,
                                           const std::vector<ActivationBatch>& batches) {
    if (batches.empty()) throw ArgumentError("ov_objective_mc: no batches");
    std::vector<OvErrorSample> out;
    out.reserve(batches.size());
    for (const auto& batch : batches) {
        OvErrorSample sample;
        sample.tokens = batch.x.rows();
        sample.per_head_sq.resize(cfg.h_q, 0.0);
        Matrix total_delta(batch.x.rows(), cfg.d_m);
        for (std::size_t i = 0; i < cfg.h_q; ++i) {
            const Matrix delta = attention_head_output(original, cfg, batch, i) -
                                 attention_head_output(compressed, cfg, batch, i);
            sample.per_head_sq[i] = frobenius_sq(delta);
            total_delta = total_delta + delta;
        }
        sample.total_sq = frobenius_sq(total_delta);
        out.push_back(std::move(sample));
    }
    return out;
}

double ov_mean_squared_error(const std::vector<OvErrorSample>& samples) {
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& s : samples) {
        total += s.total_sq;
        tokens += s.tokens;
    }
    return tokens > 0 ? total / static_cast<double>(tokens) : 0.0;
}

} // namespace lrc
