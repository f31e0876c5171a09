// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "lrc/harness.hpp"
#include "lrc/model.hpp"
#include "lrc/solver_mlp.hpp"
#include "lrc/tensor_store.hpp"

namespace lrc {

struct CalibrationConfig {
    std::size_t batches = 8;
    std::size_t tokens_per_batch = 256;
    double covariance_decay = 100.0; ///< condition number of the input covariance
    bool distinct_kv_stream = false; ///< separate stream for the key/value moment
};

struct CompressionConfig {
    double ratio = 0.2;  ///< ignored when explicit ranks are set
    std::size_t r_qk = 0; ///< 0 means derive from ratio
    std::size_t r_vo = 0;
    std::size_t r_mlp = 0;
    QkMethod qk_method = QkMethod::whitened;
    OvMethod ov_method = OvMethod::whitened;
    MlpMethod mlp_method = MlpMethod::whitened;
    CurScaleMode scale_mode = CurScaleMode::none;
    double damping = 1e-6;
    bool recalibrate_after_qk = false;
    std::size_t overall_dim_limit = 256;
    std::uint64_t budget_params = 0; ///< allocate subcommand only
    std::size_t rank_step = 1;       ///< allocate subcommand only
};

struct EvaluationConfig {
    std::size_t batches = 4;
    std::size_t tokens_per_batch = 128;
    std::size_t context_tokens = 128; ///< cached length for the flop count
    std::size_t element_size = 8;     ///< cache element width in bytes
};

/// everything a run needs; all fields defaulted, unknown keys rejected
struct RunConfig {
    std::uint64_t seed = 1;
    ModelConfig model;
    std::size_t layers = 1;
    CalibrationConfig calibration;
    CompressionConfig compression;
    EvaluationConfig evaluation;
    Dtype weights_dtype = Dtype::f64;

    RunConfig();

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    nlohmann::json to_json() const;

    /// explicit ranks if set, otherwise the uniform ratio mapping
    LayerRanks resolve_ranks() const;
};

const char* qk_method_name(QkMethod m);
const char* ov_method_name(OvMethod m);
const char* mlp_method_name(MlpMethod m);
const char* scale_mode_name(CurScaleMode m);
const char* mlp_variant_name(MlpVariant v);
QkMethod qk_method_from_name(const std::string& s);
OvMethod ov_method_from_name(const std::string& s);
MlpMethod mlp_method_from_name(const std::string& s);
CurScaleMode scale_mode_from_name(const std::string& s);
MlpVariant mlp_variant_from_name(const std::string& s);

} // namespace lrc
