// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lrc/matrix.hpp"

namespace lrc {

/// low-rank score factors for one query head or one kv group
struct QkSolution {
    std::vector<Matrix> wq_tilde;         ///< per query head, d_m x r
    Matrix wk_tilde;                      ///< d_m x r, shared inside a group
    std::vector<std::size_t> freq_indices; ///< rotary path only, ascending pairs
    double objective_value = 0.0;         ///< whitened squared residual
};

/// best rank-r replacement of wq wk^T under the expected squared score
/// error; factors are read off the whitened truncated SVD
QkSolution solve_qk_mha(const Matrix& wq, const Matrix& wk, const Matrix& r_qq,
                        const Matrix& r_kv, std::size_t r, double damping = 0.0);

/// joint solve for the query heads sharing one set of keys: the whitened
/// per-head score maps are stacked vertically, one SVD gives per-head query
/// factors and a shared key factor
QkSolution solve_qk_gqa(const std::vector<Matrix>& wq_group, const Matrix& wk_shared,
                        const Matrix& r_qq, const Matrix& r_kv, std::size_t r,
                        double damping = 0.0);

/// rotation-compatible path: scores whole (2j, 2j+1) frequency pairs by
/// whitened column/row mass and keeps the top r/2 pairs of the original
/// columns, recording the retained element indices
QkSolution solve_qk_rope(const Matrix& wq, const Matrix& wk, const Matrix& r_qq,
                         const Matrix& r_kv, std::size_t r, double damping = 0.0);

/// rotary selection for a kv group: pair scores use the vertically stacked
/// whitened query factors, the key selection is shared
QkSolution solve_qk_rope_gqa(const std::vector<Matrix>& wq_group, const Matrix& wk_shared,
                             const Matrix& r_qq, const Matrix& r_kv, std::size_t r,
                             double damping = 0.0);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

/// Monte-Carlo estimate of E[(x_q dW x_kv^T)^2] for dW = wq wk^T minus the
/// solution's product, with independent Gaussian x_q ~ cov_q, x_kv ~ cov_kv
McEstimate qk_objective_mc(const Matrix& wq, const Matrix& wk, const QkSolution& solution,
                           const Matrix& cov_q, const Matrix& cov_kv, std::size_t samples,
                           std::uint64_t seed);

/// same estimator on an explicit score-map delta
McEstimate bilinear_second_moment_mc(const Matrix& dw, const Matrix& cov_q,
                                     const Matrix& cov_kv, std::size_t samples,
                                     std::uint64_t seed);

} // namespace lrc
