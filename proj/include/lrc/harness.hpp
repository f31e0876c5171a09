// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lrc/calibration.hpp"
#include "lrc/matrix.hpp"
#include "lrc/model.hpp"
#include "lrc/solver_mlp.hpp"

namespace lrc {

enum class QkMethod {
    whitened, ///< statistics-aware factorization or pair selection
    clover,   ///< identity statistics
    abs_w,    ///< magnitude pruning (rotary path)
    wanda,    ///< diagonal-statistics pruning (rotary path)
};

enum class OvMethod {
    whitened, ///< statistics-aware per-head or per-group factorization
    plain,    ///< identity statistics
    overall,  ///< shared output factor across all heads
};

enum class MlpMethod {
    whitened, ///< statistics-aware row selection
    abs_w,
    wanda,
};

struct LayerRanks {
    std::size_t r_qk = 0;
    std::size_t r_vo = 0;
    std::size_t r_mlp = 0;
};

struct CompressionPlan {
    std::vector<LayerRanks> layers;
    QkMethod qk_method = QkMethod::whitened;
    OvMethod ov_method = OvMethod::whitened;
    MlpMethod mlp_method = MlpMethod::whitened;
    CurScaleMode mlp_scale = CurScaleMode::none;
    double damping = 1e-6;
    bool recalibrate_after_qk = false;
    std::size_t overall_dim_limit = 256;
};

/// per-layer error sums on the held-out batches; score terms are summed
/// over heads and causal entries, output/mlp terms over tokens
struct LayerErrors {
    std::size_t heads = 0;
    double score_sq = 0.0;
    double score_ref_sq = 0.0;
    std::size_t score_entries = 0; ///< causal (s, t) pairs, not times heads
    double output_sq = 0.0;
    double output_ref_sq = 0.0;
    double mlp_sq = 0.0;
    double mlp_ref_sq = 0.0;
    std::size_t tokens = 0;

    double score_mse() const;  ///< per head per entry
    double output_mse() const; ///< per token
    double mlp_mse() const;    ///< per token
    double score_rel() const;  ///< relative to the uncompressed second moment
    double output_rel() const;
    double mlp_rel() const;
};

struct Accounting {
    std::uint64_t params_before = 0;
    std::uint64_t params_after = 0;
    std::uint64_t flops_before = 0; ///< per token, multiply-add GEMM terms
    std::uint64_t flops_after = 0;
    std::uint64_t kv_bytes_before = 0; ///< per token across layers
    std::uint64_t kv_bytes_after = 0;
    std::size_t context_tokens = 1;
    std::size_t element_size = 8;
};

struct ErrorReport {
    std::vector<LayerErrors> layers;
    Accounting accounting;
};

/// per-layer functional gaps between two models of identical geometry,
/// each layer measured on the original model's input stream for that layer;
/// the mlp gap is taken on the original attention output
std::vector<LayerErrors> functional_errors(const Model& original, const Model& compressed,
                                           const std::vector<ActivationBatch>& batches);

/// sum over layers of (per-entry head-summed score error + per-token output
/// error + per-token mlp error); the scalar the allocator's closed forms
/// approximate
double total_functional_error(const std::vector<LayerErrors>& layers);

/// attention + mlp parameter count from stored shapes
std::uint64_t attention_mlp_params(const Model& m);

/// per-token multiply-add count at a given cached context length
std::uint64_t flops_per_token(const Model& m, std::size_t context_tokens);

/// per-token cache growth in bytes across layers
std::uint64_t kv_bytes_per_token(const Model& m, std::size_t element_size);

Accounting accounting(const Model& original, const Model& compressed,
                      std::size_t context_tokens, std::size_t element_size);

/// uniform relative reduction: r_c = round((1 - ratio) * d_c), rotary score
/// ranks rounded to the nearest even; throws when any rank reaches zero
LayerRanks ratio_to_ranks(const ModelConfig& cfg, double ratio);

/// closed-form attention + mlp parameter count of one layer at given ranks
std::uint64_t params_for_ranks(const ModelConfig& cfg, const LayerRanks& ranks);

/// greedy allocation: start at full ranks and repeatedly take the single
/// rank decrement with the smallest closed-form objective increase per
/// parameter saved until the budget is met; ties resolve by layer index
/// then component order (qk, vo, mlp)
std::vector<LayerRanks> mixed_rank_allocate(const Model& m, const std::vector<LayerStats>& stats,
                                            std::uint64_t budget_params, std::size_t rank_step,
                                            double damping);

/// candidate transform for the random-search oracle: left * (a b) * right
struct LinearMap {
    Matrix left;
    Matrix right;
};

/// minimum objective over n_samples random rank-r candidates (Gaussian
/// factor pairs), optionally pushed through each map, plus any explicit
/// extra candidates
double oracle_random_rank_r(const std::function<double(const Matrix&)>& objective,
                            std::size_t rows, std::size_t cols, std::size_t r,
                            std::size_t n_samples, std::uint64_t seed,
                            const std::vector<LinearMap>& maps = {},
                            const std::vector<Matrix>& extra_candidates = {});

struct CurOracleResult {
    std::vector<std::size_t> indices;
    double objective = 0.0;
};

/// exact minimizer of the selection objective by enumeration; paired mode
/// walks whole (2j, 2j+1) pairs; guarded by max_combinations
CurOracleResult oracle_exhaustive_cur(const Matrix& l, const Matrix& r, std::size_t k,
                                      bool paired, std::size_t max_combinations = 2000000);

/// selection objectives of n uniformly drawn size-k subsets
std::vector<double> random_subset_objectives(const Matrix& l, const Matrix& r, std::size_t k,
                                             bool paired, std::size_t n, std::uint64_t seed);

} // namespace lrc
