// SPDX-License-Identifier: Apache-2.0
#include "lrc/baselines.hpp"

#include <cmath>
#include <string>

#include "lrc/cur.hpp"
#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"

namespace lrc {

LowRankFactors plain_svd_layer(const Matrix& w, std::size_t r) {
    const SvdFactors f = svd(w);
    if (r < 1 || r > f.sigma.size())
        throw ArgumentError("plain_svd_layer: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(f.sigma.size()) + "]");
    LowRankFactors out;
    out.left = slice_cols(f.u, 0, r);
    out.right = Matrix(r, w.cols());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) out.right(i, j) = f.sigma[i] * f.vt(i, j);
    for (std::size_t i = r; i < f.sigma.size(); ++i)
        out.objective_value += f.sigma[i] * f.sigma[i];
    return out;
}

LowRankFactors whitened_svd_layer(const Matrix& w, const Matrix& r_xx, std::size_t r,
                                  double damping) {
    if (r_xx.rows() != w.rows())
        throw ArgumentError("whitened_svd_layer: statistics dimension != weight height");
    const Matrix s = psd_sqrt(r_xx, damping);
    const Matrix s_inv = psd_inv_sqrt(r_xx, damping);
    const Matrix whitened = multiply(s, w);
    const SvdFactors f = svd(whitened);
    if (r < 1 || r > f.sigma.size())
        throw ArgumentError("whitened_svd_layer: rank " + std::to_string(r) + " out of [1, " +
                            std::to_string(f.sigma.size()) + "]");
    LowRankFactors out;
    out.left = multiply(s_inv, slice_cols(f.u, 0, r));
    out.right = Matrix(r, w.cols());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) out.right(i, j) = f.sigma[i] * f.vt(i, j);
    out.objective_value = frobenius_sq(whitened - multiply(s, multiply(out.left, out.right)));
    return out;
}

QkSolution clover_qk(const Matrix& wq, const Matrix& wk, std::size_t r) {
    const Matrix id = Matrix::identity(wq.rows());
    return solve_qk_mha(wq, wk, id, id, r, 0.0);
}

OvSolution clover_ov(const Matrix& wv, const Matrix& wo, std::size_t r) {
    const Matrix id = Matrix::identity(wv.rows());
    return solve_ov_mha(wv, wo, id, r, 0.0);
}

namespace {

std::vector<std::size_t> select_from_scores(const std::vector<double>& scores, std::size_t k,
                                            bool paired, const char* op) {
    if (!paired) return top_k_indices(scores, k);
    if (scores.size() % 2 != 0 || k % 2 != 0)
        throw ArgumentError(std::string(op) + ": paired mode needs even width and even k");
    std::vector<double> pair_scores(scores.size() / 2);
    for (std::size_t p = 0; 2 * p < scores.size(); ++p)
        pair_scores[p] = scores[2 * p] + scores[2 * p + 1];
    return top_pair_indices(pair_scores, k / 2);
}

} // namespace

std::vector<std::size_t> prune_abs_w(const Matrix& l, const Matrix& r, std::size_t k,
                                     bool paired) {
    if (l.cols() != r.rows()) throw ArgumentError("prune_abs_w: inner dim mismatch");
    std::vector<double> scores(l.cols(), 0.0);
    for (std::size_t i = 0; i < l.cols(); ++i) {
        double s = 0.0;
        for (std::size_t a = 0; a < l.rows(); ++a) s += std::fabs(l(a, i));
        for (std::size_t b = 0; b < r.cols(); ++b) s += std::fabs(r(i, b));
        scores[i] = s;
    }
    return select_from_scores(scores, k, paired, "prune_abs_w");
}

std::vector<std::size_t> prune_wanda(const Matrix& l, const Matrix& r,
                                     const std::vector<double>& diag_left,
                                     const std::vector<double>& diag_right, std::size_t k,
                                     bool paired) {
    if (l.cols() != r.rows()) throw ArgumentError("prune_wanda: inner dim mismatch");
    if (diag_left.size() != l.rows() || diag_right.size() != r.cols())
        throw ArgumentError("prune_wanda: diagonal statistics length mismatch");
    for (double d : diag_left)
        if (d < 0.0) throw ArgumentError("prune_wanda: negative left diagonal");
    for (double d : diag_right)
        if (d < 0.0) throw ArgumentError("prune_wanda: negative right diagonal");

    std::vector<double> scores(l.cols(), 0.0);
    for (std::size_t i = 0; i < l.cols(); ++i) {
        double left_mass = 0.0;
        for (std::size_t a = 0; a < l.rows(); ++a) left_mass += diag_left[a] * l(a, i) * l(a, i);
        double right_mass = 0.0;
        for (std::size_t b = 0; b < r.cols(); ++b)
            right_mass += r(i, b) * r(i, b) * diag_right[b];
        scores[i] = left_mass * right_mass;
    }
    return select_from_scores(scores, k, paired, "prune_wanda");
}

} // namespace lrc
