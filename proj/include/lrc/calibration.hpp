// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "lrc/matrix.hpp"
#include "lrc/model.hpp"

namespace lrc {

/// running second-moment accumulator in double precision
struct CorrAccumulator {
    explicit CorrAccumulator(std::size_t dim) : sum_outer(dim, dim), count(0) {}

    Matrix sum_outer;  ///< symmetric by construction
    std::size_t count; ///< rows accumulated
};

/// sum_outer += x^T x over the rows of x
void accumulate(CorrAccumulator& acc, const Matrix& x);

/// combine two accumulators over the same dimension
void merge(CorrAccumulator& into, const CorrAccumulator& other);

/// sum_outer / count; throws NumericError when nothing was accumulated
Matrix finalize(const CorrAccumulator& acc);

/// second moments a layer's solvers consume
struct LayerStats {
    Matrix r_qq;              ///< d_m, query-side inputs
    Matrix r_kv;              ///< d_m, key/value-side inputs
    std::vector<Matrix> r_p;  ///< per query head, attention-weighted inputs
    Matrix r_d;               ///< d_inter, post-activation mlp hidden
    Matrix r_p_cat;           ///< (h_q * d_m)^2, empty unless requested
    std::size_t sample_count = 0;
};

/// runs the layer on every batch and accumulates all statistics; the mlp
/// hidden stream is taken downstream of attention, matching layer_forward.
/// kv_batches, when given, feeds only the r_kv accumulator (a distinct
/// key/value input stream); collect_p_cat additionally estimates the
/// concatenated-context moment for the shared-output variant.
LayerStats collect_layer_stats(const LayerWeights& w, const ModelConfig& cfg,
                               const std::vector<ActivationBatch>& batches,
                               const std::vector<ActivationBatch>* kv_batches = nullptr,
                               bool collect_p_cat = false);

} // namespace lrc
