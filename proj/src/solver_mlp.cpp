// SPDX-License-Identifier: Apache-2.0
#include "lrc/solver_mlp.hpp"

#include <cmath>
#include <string>

#include "lrc/cur.hpp"
#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"
#include "lrc/rng.hpp"

namespace lrc {

namespace {

/// wd with unselected rows zeroed and selected rows scaled
Matrix masked_wd(const Matrix& wd, const MlpSolution& sol) {
    Matrix out(wd.rows(), wd.cols());
    for (std::size_t i = 0; i < sol.selected.size(); ++i) {
        const std::size_t row = sol.selected[i];
        for (std::size_t j = 0; j < wd.cols(); ++j) out(row, j) = sol.u_values[i] * wd(row, j);
    }
    return out;
}

} // namespace

MlpSolution mlp_cur_select(const Matrix& r_d, const Matrix& wd, std::size_t r,
                           CurScaleMode mode, double damping) {
    const std::size_t d_inter = wd.rows();
    if (r_d.rows() != d_inter)
        throw ArgumentError("mlp_cur_select: statistics dimension != d_inter");
    if (r < 1 || r > d_inter)
        throw ArgumentError("mlp_cur_select: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(d_inter) + "]");

    const Matrix s = psd_sqrt(r_d, damping);
    std::vector<double> lambda(d_inter);
    for (std::size_t i = 0; i < d_inter; ++i)
        lambda[i] = col_norm_sq(s, i) * row_norm_sq(wd, i);

    MlpSolution sol;
    sol.scale_mode = mode;
    sol.selected = top_k_indices(lambda, r);
    sol.u_values.assign(r, 1.0);
    if (mode == CurScaleMode::monte_carlo) {
        for (std::size_t i = 0; i < r; ++i) {
            const double l = lambda[sol.selected[i]];
            // a zero-mass row carries nothing to rescale
            sol.u_values[i] = l > 0.0 ? 1.0 / (static_cast<double>(r) * l) : 1.0;
        }
    }
    sol.objective_value = selection_objective(s, wd, sol.selected, &sol.u_values);
    return sol;
}

MlpCompressed compress_mlp(const Matrix& wu, const Matrix& wg, const Matrix& wd,
                           const MlpSolution& solution) {
    if (wu.cols() != wd.rows())
        throw ArgumentError("compress_mlp: wu/wd inner dim mismatch");
    if (!wg.empty() && (wg.rows() != wu.rows() || wg.cols() != wu.cols()))
        throw ArgumentError("compress_mlp: wg shape mismatch");
    if (solution.u_values.size() != solution.selected.size())
        throw ArgumentError("compress_mlp: scaling length mismatch");

    MlpCompressed out;
    out.wu = select_cols(wu, solution.selected);
    if (!wg.empty()) out.wg = select_cols(wg, solution.selected);
    out.wd = select_rows(wd, solution.selected);
    for (std::size_t i = 0; i < solution.selected.size(); ++i)
        for (std::size_t j = 0; j < out.wd.cols(); ++j) out.wd(i, j) *= solution.u_values[i];
    return out;
}

double mlp_objective_batches(const LayerWeights& w, const ModelConfig& cfg,
                             const MlpSolution& solution,
                             const std::vector<ActivationBatch>& batches) {
    if (batches.empty()) throw ArgumentError("mlp_objective_batches: no batches");
    const Matrix delta = masked_wd(w.wd, solution) - w.wd;
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& batch : batches) {
        const Matrix attn = attention_output(w, cfg, batch);
        const Matrix hidden = mlp_forward(w, cfg, attn).hidden;
        total += frobenius_sq(multiply(hidden, delta));
        tokens += hidden.rows();
    }
    return total / static_cast<double>(tokens);
}

McEstimate mlp_objective_mc(const Matrix& wd, const MlpSolution& solution, const Matrix& cov_d,
                            std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw ArgumentError("mlp_objective_mc: zero samples");
    if (cov_d.rows() != wd.rows()) throw ArgumentError("mlp_objective_mc: dimension mismatch");
    const Matrix delta = masked_wd(wd, solution) - wd;
    const GaussianSampler gen(psd_sqrt(cov_d));
    Rng rng(mix_seed(seed, 2));

    double sum = 0.0;
    double sum_sq = 0.0;
    std::vector<double> err(wd.cols());
    for (std::size_t k = 0; k < samples; ++k) {
        const auto x = gen.sample_row(rng);
        for (std::size_t j = 0; j < wd.cols(); ++j) err[j] = 0.0;
        for (std::size_t i = 0; i < wd.rows(); ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            const double* row = delta.row(i);
            for (std::size_t j = 0; j < wd.cols(); ++j) err[j] += xi * row[j];
        }
        double y = 0.0;
        for (std::size_t j = 0; j < wd.cols(); ++j) y += err[j] * err[j];
        sum += y;
        sum_sq += y * y;
    }

    McEstimate est;
    est.samples = samples;
    est.mean = sum / static_cast<double>(samples);
    const double var = std::max(0.0, sum_sq / static_cast<double>(samples) - est.mean * est.mean);
    est.std_error = std::sqrt(var / static_cast<double>(samples));
    return est;
}

} // namespace lrc
