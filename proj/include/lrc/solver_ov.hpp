// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "lrc/matrix.hpp"
#include "lrc/model.hpp"

namespace lrc {

enum class OvVariant {
    per_head,  ///< one value/output pair per head
    gqa_joint, ///< shared value factor across a kv group
    overall,   ///< shared output factor across every head
};

/// low-rank value/output factors
struct OvSolution {
    OvVariant variant = OvVariant::per_head;
    Matrix wv_tilde;              ///< d_m x r (overall: h*d_m x r stacked)
    std::vector<Matrix> wo_tilde; ///< per head r x d_m (overall: one shared)
    double objective_value = 0.0;
    std::size_t effective_kv_dim = 0; ///< cached value width per carrier
};

/// best rank-r replacement of wv wo under the expected squared output error
/// of one head, whitened by the attention-weighted input moment r_p
OvSolution solve_ov_mha(const Matrix& wv, const Matrix& wo, const Matrix& r_p, std::size_t r,
                        double damping = 0.0);

/// joint solve for the query heads reading one shared value projection: the
/// whitened fused maps are stacked horizontally, one SVD gives a shared
/// value factor and per-head output factors; whitening uses the raw
/// key/value input moment
OvSolution solve_ov_gqa(const Matrix& wv_shared, const std::vector<Matrix>& wo_group,
                        const Matrix& r_kv, std::size_t r, double damping = 0.0);

/// every head's fused map stacked vertically under the concatenated-context
/// moment; yields per-head value factors and one shared output factor.
/// dim_limit guards the (heads * d_m)^2 statistics
OvSolution solve_ov_overall(const std::vector<Matrix>& wv_per_head,
                            const std::vector<Matrix>& wo_per_head, const Matrix& r_p_cat,
                            std::size_t r, double damping = 0.0, std::size_t dim_limit = 256);

/// squared attention-output error of one batch, totals and per-head terms
struct OvErrorSample {
    double total_sq = 0.0;
    std::vector<double> per_head_sq;
    std::size_t tokens = 0;
};

/// forward both models on each batch and measure attention-output error;
/// entry i of per_head_sq is ||o_i - o~_i||^2 summed over tokens
std::vector<OvErrorSample> ov_objective_mc(const LayerWeights& original,
                                           const LayerWeights& compressed,
                                           const ModelConfig& cfg,
                                           const std::vector<ActivationBatch>& batches);

/// mean squared attention-output error per token across batches
double ov_mean_squared_error(const std::vector<OvErrorSample>& samples);

} // namespace lrc
