// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lrc/matrix.hpp"
#include "lrc/model.hpp"
#include "lrc/solver_qk.hpp"

namespace lrc {

enum class CurScaleMode {
    none,        ///< keep selected rows as they are
    monte_carlo, ///< rescale selected rows by 1 / (r * lambda_i)
};

/// row selection over the intermediate dimension
struct MlpSolution {
    std::vector<std::size_t> selected; ///< ascending row indices of wd
    std::vector<double> u_values;      ///< per selected row, 1 unless rescaled
    double objective_value = 0.0;      ///< whitened squared residual
    CurScaleMode scale_mode = CurScaleMode::none;
};

/// scores row i of wd by ||S_{:,i}||^2 ||Wd_{i,:}||^2 with S the damped root
/// of r_d and keeps the top r rows, ties at the lowest index
MlpSolution mlp_cur_select(const Matrix& r_d, const Matrix& wd, std::size_t r,
                           CurScaleMode mode = CurScaleMode::none, double damping = 0.0);

/// reduced projections: selected columns of wu/wg, selected rows of wd with
/// the solution's scaling folded in
struct MlpCompressed {
    Matrix wu;
    Matrix wg; ///< empty when the input wg is empty
    Matrix wd;
};

MlpCompressed compress_mlp(const Matrix& wu, const Matrix& wg, const Matrix& wd,
                           const MlpSolution& solution);

/// mean squared output error per token over the given batches, measured on
/// the original layer's hidden stream (selection commutes with the
/// activation, so this equals the compressed-vs-original output gap)
double mlp_objective_batches(const LayerWeights& w, const ModelConfig& cfg,
                             const MlpSolution& solution,
                             const std::vector<ActivationBatch>& batches);

/// Monte-Carlo estimate of E||x U Wd - x Wd||^2 with Gaussian x ~ cov_d
McEstimate mlp_objective_mc(const Matrix& wd, const MlpSolution& solution, const Matrix& cov_d,
                            std::size_t samples, std::uint64_t seed);

} // namespace lrc
