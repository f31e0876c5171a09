// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "lrc/matrix.hpp"
#include "lrc/solver_ov.hpp"
#include "lrc/solver_qk.hpp"

namespace lrc {

struct LowRankFactors {
    Matrix left;
    Matrix right;
    double objective_value = 0.0; ///< squared residual in the solve's metric
};

/// plain truncated SVD of one weight matrix; objective is the tail of the
/// squared spectrum
LowRankFactors plain_svd_layer(const Matrix& w, std::size_t r);

/// whitened truncated SVD of one weight matrix under the input moment r_xx
LowRankFactors whitened_svd_layer(const Matrix& w, const Matrix& r_xx, std::size_t r,
                                  double damping = 0.0);

/// score solve with identity statistics (fused-product truncated SVD)
QkSolution clover_qk(const Matrix& wq, const Matrix& wk, std::size_t r);

/// value/output solve with identity statistics
OvSolution clover_ov(const Matrix& wv, const Matrix& wo, std::size_t r);

/// magnitude pruning: keeps the k indices with the largest column-sum of
/// |l| plus row-sum of |r|; paired mode scores (2j, 2j+1) pairs together
/// and keeps whole pairs (k counts elements)
std::vector<std::size_t> prune_abs_w(const Matrix& l, const Matrix& r, std::size_t k,
                                     bool paired = false);

/// diagonal-statistics pruning: index scores are the whitened column/row
/// mass with both moments replaced by their diagonals
std::vector<std::size_t> prune_wanda(const Matrix& l, const Matrix& r,
                                     const std::vector<double>& diag_left,
                                     const std::vector<double>& diag_right, std::size_t k,
                                     bool paired = false);

} // namespace lrc
