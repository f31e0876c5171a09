// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "lrc/matrix.hpp"

namespace lrc {

enum class MlpVariant {
    two_layer_relu, ///< y = relu(x Wu) Wd
    gated_silu,     ///< y = (silu(x Wg) .* (x Wu)) Wd
};

/// static layer geometry; head dims here are the original ones, so the
/// softmax scale and rotation frequencies stay fixed after compression
struct ModelConfig {
    std::size_t d_m = 0;
    std::size_t h_q = 0;
    std::size_t h_kv = 0;
    std::size_t d_qk = 0;
    std::size_t d_vo = 0;
    std::size_t d_inter = 0;
    bool rope = false;
    double rope_theta = 10000.0;
    MlpVariant mlp = MlpVariant::gated_silu;
    double softmax_scale = 0.0; ///< 0 = sqrt(d_qk)

    std::size_t group_size() const { return h_q / h_kv; }
    std::size_t kv_head(std::size_t query_head) const { return query_head / group_size(); }
    double score_scale() const;

    /// throws ArgumentError on inconsistent geometry
    void validate() const;
};

/// per-layer projections; matrices may be narrower than the config dims
/// after compression
struct LayerWeights {
    std::vector<Matrix> wq; ///< h_q entries, d_m x dq_head
    std::vector<Matrix> wk; ///< h_kv entries, d_m x dq_head
    std::vector<Matrix> wv; ///< h_kv entries (h_q with per_query_value), d_m x dv_head
    std::vector<Matrix> wo; ///< h_q entries, dv_head x d_m
    Matrix wu;              ///< d_m x d_inter
    Matrix wg;              ///< d_m x d_inter, empty unless gated
    Matrix wd;              ///< d_inter x d_m

    /// retained rotation element indices per query head, strictly increasing,
    /// adjacent (2j, 2j+1) pairs; empty = identity mapping
    std::vector<std::vector<std::size_t>> qk_freq_indices;

    /// value projections indexed by query head instead of kv head
    /// (set by the shared-output compression variant)
    bool per_query_value = false;

    std::size_t value_head(const ModelConfig& cfg, std::size_t query_head) const {
        return per_query_value ? query_head : cfg.kv_head(query_head);
    }
};

struct Model {
    ModelConfig config;
    std::vector<LayerWeights> layers;
};

/// token activations plus their rotation positions
struct ActivationBatch {
    Matrix x;                           ///< T x d_m
    std::vector<std::size_t> positions; ///< length T, strictly increasing
};

/// rotate one head vector at position pos; freq_indices remaps retained
/// pairs back to their original frequencies (nullptr or empty = identity,
/// which requires v.size() == d_qk_original)
std::vector<double> rope_rotate(const std::vector<double>& v, std::size_t pos,
                                const std::vector<std::size_t>* freq_indices,
                                std::size_t d_qk_original, double rope_theta);

/// pre-softmax scores (unscaled q k^T) and the causal-masked row softmax of
/// scores / scale; masked entries of post are exactly zero
struct HeadScores {
    Matrix pre;  ///< T x T
    Matrix post; ///< T x T, rows sum to 1 over the unmasked prefix
};

HeadScores attention_scores(const LayerWeights& w, const ModelConfig& cfg,
                            const ActivationBatch& batch, std::size_t head);

/// attention-weighted inputs per head, p_t = sum_s post[t, s] x_s
Matrix attention_context(const HeadScores& scores, const Matrix& x);

/// o_i = (A'_i X) Wv Wo for one head
Matrix attention_head_output(const LayerWeights& w, const ModelConfig& cfg,
                             const ActivationBatch& batch, std::size_t head);

/// sum of all head outputs, T x d_m
Matrix attention_output(const LayerWeights& w, const ModelConfig& cfg,
                        const ActivationBatch& batch);

struct MlpOut {
    Matrix hidden; ///< T x d_inter, post-activation
    Matrix y;      ///< T x d_m
};

MlpOut mlp_forward(const LayerWeights& w, const ModelConfig& cfg, const Matrix& x);

/// attention output fed through the MLP; layers chain through this
Matrix layer_forward(const LayerWeights& w, const ModelConfig& cfg, const ActivationBatch& batch);

/// elements appended to the per-token decode cache (k and v rows across
/// heads), derived from projection shapes
std::size_t kv_cache_elements_per_token(const LayerWeights& w, const ModelConfig& cfg);

/// counts every element actually appended to the decode cache
struct KvCacheProbe {
    std::size_t tokens = 0;
    std::size_t elements = 0;
};

/// token-by-token attention with a growing k/v cache; matches
/// attention_output on the same batch and fills the probe if given
Matrix attention_output_decode(const LayerWeights& w, const ModelConfig& cfg,
                               const ActivationBatch& batch, KvCacheProbe* probe = nullptr);

void validate_batch(const ActivationBatch& batch, const ModelConfig& cfg);
void validate_weights(const LayerWeights& w, const ModelConfig& cfg);

} // namespace lrc
