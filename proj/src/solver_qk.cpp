// SPDX-License-Identifier: Apache-2.0
#include "lrc/solver_qk.hpp"

#include <cmath>
#include <string>

#include "lrc/cur.hpp"
#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"
#include "lrc/rng.hpp"

namespace lrc {

namespace {

void check_group(const std::vector<Matrix>& wq_group, const Matrix& wk, const Matrix& r_qq,
                 const Matrix& r_kv, const char* op) {
    if (wq_group.empty()) throw ArgumentError(std::string(op) + ": empty head group");
    const std::size_t d_m = wk.rows();
    const std::size_t d_qk = wk.cols();
    for (const auto& wq : wq_group) {
        if (wq.rows() != d_m || wq.cols() != d_qk)
            throw ArgumentError(std::string(op) + ": query/key shape mismatch");
    }
    if (r_qq.rows() != d_m || r_kv.rows() != d_m)
        throw ArgumentError(std::string(op) + ": statistics dimension != d_m");
}

} // namespace

QkSolution solve_qk_gqa(const std::vector<Matrix>& wq_group, const Matrix& wk_shared,
                        const Matrix& r_qq, const Matrix& r_kv, std::size_t r, double damping) {
    check_group(wq_group, wk_shared, r_qq, r_kv, "solve_qk");
    const std::size_t d_m = wk_shared.rows();
    const std::size_t d_qk = wk_shared.cols();
    if (r < 1 || r > std::min(d_qk, d_m))
        throw ArgumentError("solve_qk: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(std::min(d_qk, d_m)) + "]");

    const Matrix s_q = psd_sqrt(r_qq, damping);
    const Matrix s_kv = psd_sqrt(r_kv, damping);
    const Matrix s_q_inv = psd_inv_sqrt(r_qq, damping);
    const Matrix s_kv_inv = psd_inv_sqrt(r_kv, damping);

    const std::size_t g = wq_group.size();
    std::vector<Matrix> whitened(g);
    const Matrix wk_t = transpose(wk_shared);
    for (std::size_t i = 0; i < g; ++i)
        whitened[i] = multiply(multiply(s_q, multiply(wq_group[i], wk_t)), s_kv);

    const SvdFactors f = svd(vstack(whitened));

    QkSolution sol;
    sol.wq_tilde.resize(g);
    for (std::size_t i = 0; i < g; ++i) {
        const Matrix block = slice_cols(slice_rows(f.u, i * d_m, (i + 1) * d_m), 0, r);
        sol.wq_tilde[i] = multiply(s_q_inv, block);
    }
    Matrix right(r, d_m); // sigma_r vt_r s_kv_inv, transposed below
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d_m; ++j) right(i, j) = f.sigma[i] * f.vt(i, j);
    sol.wk_tilde = transpose(multiply(right, s_kv_inv));

    sol.objective_value = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        const Matrix approx =
            multiply(multiply(s_q, multiply(sol.wq_tilde[i], transpose(sol.wk_tilde))), s_kv);
        sol.objective_value += frobenius_sq(whitened[i] - approx);
    }
    return sol;
}

QkSolution solve_qk_mha(const Matrix& wq, const Matrix& wk, const Matrix& r_qq,
                        const Matrix& r_kv, std::size_t r, double damping) {
    return solve_qk_gqa({wq}, wk, r_qq, r_kv, r, damping);
}

QkSolution solve_qk_rope_gqa(const std::vector<Matrix>& wq_group, const Matrix& wk_shared,
                             const Matrix& r_qq, const Matrix& r_kv, std::size_t r,
                             double damping) {
    check_group(wq_group, wk_shared, r_qq, r_kv, "solve_qk_rope");
    const std::size_t d_qk = wk_shared.cols();
    if (d_qk % 2 != 0)
        throw ArgumentError("solve_qk_rope: d_qk " + std::to_string(d_qk) + " must be even");
    if (r % 2 != 0 || r < 2 || r > d_qk)
        throw ArgumentError("solve_qk_rope: rank " + std::to_string(r) +
                            " must be even in [2, " + std::to_string(d_qk) + "]");

    const Matrix s_q = psd_sqrt(r_qq, damping);
    const Matrix s_kv = psd_sqrt(r_kv, damping);

    const std::size_t g = wq_group.size();
    std::vector<Matrix> l_blocks(g);
    for (std::size_t i = 0; i < g; ++i) l_blocks[i] = multiply(s_q, wq_group[i]);
    const Matrix l_cat = vstack(l_blocks);
    const Matrix r_side = multiply(transpose(wk_shared), s_kv);

    // pair mass: the two element contributions of each frequency pair
    std::vector<double> pair_scores(d_qk / 2);
    for (std::size_t p = 0; 2 * p < d_qk; ++p) {
        pair_scores[p] = col_norm_sq(l_cat, 2 * p) * row_norm_sq(r_side, 2 * p) +
                         col_norm_sq(l_cat, 2 * p + 1) * row_norm_sq(r_side, 2 * p + 1);
    }

    QkSolution sol;
    sol.freq_indices = top_pair_indices(pair_scores, r / 2);
    sol.wq_tilde.resize(g);
    for (std::size_t i = 0; i < g; ++i) sol.wq_tilde[i] = select_cols(wq_group[i], sol.freq_indices);
    sol.wk_tilde = select_cols(wk_shared, sol.freq_indices);
    sol.objective_value = selection_objective(l_cat, r_side, sol.freq_indices);
    return sol;
}

QkSolution solve_qk_rope(const Matrix& wq, const Matrix& wk, const Matrix& r_qq,
                         const Matrix& r_kv, std::size_t r, double damping) {
    return solve_qk_rope_gqa({wq}, wk, r_qq, r_kv, r, damping);
}

McEstimate bilinear_second_moment_mc(const Matrix& dw, const Matrix& cov_q,
                                     const Matrix& cov_kv, std::size_t samples,
                                     std::uint64_t seed) {
    if (samples == 0) throw ArgumentError("bilinear_second_moment_mc: zero samples");
    if (dw.rows() != cov_q.rows() || dw.cols() != cov_kv.rows())
        throw ArgumentError("bilinear_second_moment_mc: shape mismatch");
    const GaussianSampler gen_q(psd_sqrt(cov_q));
    const GaussianSampler gen_kv(psd_sqrt(cov_kv));
    Rng rng_q(mix_seed(seed, 0));
    Rng rng_kv(mix_seed(seed, 1));

    double sum = 0.0;
    double sum_sq = 0.0;
    std::vector<double> tmp(dw.cols());
    for (std::size_t k = 0; k < samples; ++k) {
        const auto xq = gen_q.sample_row(rng_q);
        const auto xkv = gen_kv.sample_row(rng_kv);
        for (std::size_t j = 0; j < dw.cols(); ++j) tmp[j] = 0.0;
        for (std::size_t i = 0; i < dw.rows(); ++i) {
            const double xi = xq[i];
            if (xi == 0.0) continue;
            const double* row = dw.row(i);
            for (std::size_t j = 0; j < dw.cols(); ++j) tmp[j] += xi * row[j];
        }
        double score = 0.0;
        for (std::size_t j = 0; j < dw.cols(); ++j) score += tmp[j] * xkv[j];
        const double y = score * score;
        sum += y;
        sum_sq += y * y;
    }

    McEstimate est;
    est.samples = samples;
    est.mean = sum / static_cast<double>(samples);
    const double var =
        std::max(0.0, sum_sq / static_cast<double>(samples) - est.mean * est.mean);
    est.std_error = std::sqrt(var / static_cast<double>(samples));
    return est;
}

McEstimate qk_objective_mc(const Matrix& wq, const Matrix& wk, const QkSolution& solution,
                           const Matrix& cov_q, const Matrix& cov_kv, std::size_t samples,
                           std::uint64_t seed) {
    if (solution.wq_tilde.size() != 1)
        throw ArgumentError("qk_objective_mc: expected a single-head solution");
    const Matrix dw = multiply(wq, transpose(wk)) -
                      multiply(solution.wq_tilde[0], transpose(solution.wk_tilde));
    return bilinear_second_moment_mc(dw, cov_q, cov_kv, samples, seed);
}

} // namespace lrc
