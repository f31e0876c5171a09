// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "lrc/calibration.hpp"
#include "lrc/harness.hpp"
#include "lrc/model.hpp"
#include "lrc/run_config.hpp"
#include "lrc/tensor_store.hpp"

namespace lrc {

/// seeded random model; weights scaled by the inverse root of their fan-in
Model generate_model(const RunConfig& cfg);

/// seeded Gaussian token batches drawn from one shared non-white input
/// covariance; stream separates calibration, kv, and evaluation draws
std::vector<ActivationBatch> sample_batches(const RunConfig& cfg, std::size_t count,
                                            std::size_t tokens, std::uint64_t stream);

/// per-layer statistics on the model's own forward streams
std::vector<LayerStats> calibrate_model(const Model& m, const RunConfig& cfg);

struct CompressionResult {
    Model compressed;
    std::vector<LayerRanks> ranks;
    std::vector<double> qk_objective;  ///< closed-form, per layer
    std::vector<double> ov_objective;
    std::vector<double> mlp_objective;
};

/// compress every layer at the config's ranks and methods
CompressionResult compress_model(const Model& m, const std::vector<LayerStats>& stats,
                                 const RunConfig& cfg);

/// same with an explicit per-layer rank plan
CompressionResult compress_model_with_ranks(const Model& m, const std::vector<LayerStats>& stats,
                                            const RunConfig& cfg,
                                            const std::vector<LayerRanks>& ranks);

/// functional errors on fresh held-out batches plus accounting
ErrorReport evaluate_models(const Model& original, const Model& compressed,
                            const RunConfig& cfg);

/// deterministic key=value report; ranks are read back from the compressed
/// shapes so the text is stable across serialization boundaries
std::string format_report(const RunConfig& cfg, const Model& original, const Model& compressed,
                          const ErrorReport& report);

/// deterministic plan summary for compress/allocate
std::string format_plan(const RunConfig& cfg, const CompressionResult& result);

/// rank sweep of one component (others at full rank), as CSV text
std::string sweep_component(const Model& m, const std::vector<LayerStats>& stats,
                            const RunConfig& cfg, const std::string& component);

void save_model(const Model& m, const std::string& path, Dtype weights_dtype = Dtype::f64);
Model load_model(const std::string& path);
void save_stats(const std::vector<LayerStats>& stats, const std::string& path);
std::vector<LayerStats> load_stats(const std::string& path);

} // namespace lrc
