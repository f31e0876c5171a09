// SPDX-License-Identifier: Apache-2.0
#include "lrc/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "lrc/errors.hpp"

namespace lrc {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ArgumentError("config section '" + scope + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items())
        if (!ok.count(item.key()))
            throw ArgumentError("unknown config key '" + scope + item.key() + "'");
}

template <typename T>
T read(const json& j, const std::string& scope, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ArgumentError("config key '" + scope + key + "' has the wrong type");
    }
}

std::string read_str(const json& j, const std::string& scope, const char* key,
                     const std::string& fallback) {
    return read<std::string>(j, scope, key, fallback);
}

} // namespace

RunConfig::RunConfig() {
    model.d_m = 32;
    model.h_q = 4;
    model.h_kv = 2;
    model.d_qk = 8;
    model.d_vo = 8;
    model.d_inter = 64;
    model.rope = true;
    model.mlp = MlpVariant::gated_silu;
}

const char* qk_method_name(QkMethod m) {
    switch (m) {
        case QkMethod::whitened: return "whitened";
        case QkMethod::clover: return "clover";
        case QkMethod::abs_w: return "abs_w";
        case QkMethod::wanda: return "wanda";
    }
    return "whitened";
}

const char* ov_method_name(OvMethod m) {
    switch (m) {
        case OvMethod::whitened: return "whitened";
        case OvMethod::plain: return "plain";
        case OvMethod::overall: return "overall";
    }
    return "whitened";
}

const char* mlp_method_name(MlpMethod m) {
    switch (m) {
        case MlpMethod::whitened: return "whitened";
        case MlpMethod::abs_w: return "abs_w";
        case MlpMethod::wanda: return "wanda";
    }
    return "whitened";
}

const char* scale_mode_name(CurScaleMode m) {
    return m == CurScaleMode::monte_carlo ? "monte_carlo" : "none";
}

const char* mlp_variant_name(MlpVariant v) {
    return v == MlpVariant::gated_silu ? "gated_silu" : "two_layer_relu";
}

QkMethod qk_method_from_name(const std::string& s) {
    if (s == "whitened") return QkMethod::whitened;
    if (s == "clover") return QkMethod::clover;
    if (s == "abs_w") return QkMethod::abs_w;
    if (s == "wanda") return QkMethod::wanda;
    throw ArgumentError("unknown qk method '" + s + "'");
}

OvMethod ov_method_from_name(const std::string& s) {
    if (s == "whitened") return OvMethod::whitened;
    if (s == "plain") return OvMethod::plain;
    if (s == "overall") return OvMethod::overall;
    throw ArgumentError("unknown ov method '" + s + "'");
}

MlpMethod mlp_method_from_name(const std::string& s) {
    if (s == "whitened") return MlpMethod::whitened;
    if (s == "abs_w") return MlpMethod::abs_w;
    if (s == "wanda") return MlpMethod::wanda;
    throw ArgumentError("unknown mlp method '" + s + "'");
}

CurScaleMode scale_mode_from_name(const std::string& s) {
    if (s == "none") return CurScaleMode::none;
    if (s == "monte_carlo") return CurScaleMode::monte_carlo;
    throw ArgumentError("unknown scale mode '" + s + "'");
}

MlpVariant mlp_variant_from_name(const std::string& s) {
    if (s == "gated_silu") return MlpVariant::gated_silu;
    if (s == "two_layer_relu") return MlpVariant::two_layer_relu;
    throw ArgumentError("unknown mlp variant '" + s + "'");
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    check_keys(j, "", {"seed", "model", "calibration", "compression", "evaluation",
                       "weights_dtype"});
    cfg.seed = read<std::uint64_t>(j, "", "seed", cfg.seed);
    const std::string dtype = read_str(j, "", "weights_dtype", dtype_name(cfg.weights_dtype));
    try {
        cfg.weights_dtype = dtype_from_name(dtype);
    } catch (const IoError& e) {
        throw ArgumentError(e.what());
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model.", {"d_m", "h_q", "h_kv", "d_qk", "d_vo", "d_inter", "layers",
                                 "rope", "rope_theta", "mlp", "softmax_scale"});
        cfg.model.d_m = read<std::size_t>(m, "model.", "d_m", cfg.model.d_m);
        cfg.model.h_q = read<std::size_t>(m, "model.", "h_q", cfg.model.h_q);
        cfg.model.h_kv = read<std::size_t>(m, "model.", "h_kv", cfg.model.h_kv);
        cfg.model.d_qk = read<std::size_t>(m, "model.", "d_qk", cfg.model.d_qk);
        cfg.model.d_vo = read<std::size_t>(m, "model.", "d_vo", cfg.model.d_vo);
        cfg.model.d_inter = read<std::size_t>(m, "model.", "d_inter", cfg.model.d_inter);
        cfg.layers = read<std::size_t>(m, "model.", "layers", cfg.layers);
        cfg.model.rope = read<bool>(m, "model.", "rope", cfg.model.rope);
        cfg.model.rope_theta = read<double>(m, "model.", "rope_theta", cfg.model.rope_theta);
        cfg.model.mlp =
            mlp_variant_from_name(read_str(m, "model.", "mlp", mlp_variant_name(cfg.model.mlp)));
        cfg.model.softmax_scale =
            read<double>(m, "model.", "softmax_scale", cfg.model.softmax_scale);
    }

    if (j.contains("calibration")) {
        const json& c = j.at("calibration");
        check_keys(c, "calibration.",
                   {"batches", "tokens_per_batch", "covariance_decay", "distinct_kv_stream"});
        cfg.calibration.batches =
            read<std::size_t>(c, "calibration.", "batches", cfg.calibration.batches);
        cfg.calibration.tokens_per_batch = read<std::size_t>(c, "calibration.", "tokens_per_batch",
                                                             cfg.calibration.tokens_per_batch);
        cfg.calibration.covariance_decay = read<double>(c, "calibration.", "covariance_decay",
                                                        cfg.calibration.covariance_decay);
        cfg.calibration.distinct_kv_stream = read<bool>(c, "calibration.", "distinct_kv_stream",
                                                        cfg.calibration.distinct_kv_stream);
        if (cfg.calibration.batches == 0)
            throw ArgumentError("calibration.batches must be positive");
        if (cfg.calibration.tokens_per_batch == 0)
            throw ArgumentError("calibration.tokens_per_batch must be positive");
        if (!(cfg.calibration.covariance_decay >= 1.0))
            throw ArgumentError("calibration.covariance_decay must be >= 1");
    }

    if (j.contains("compression")) {
        const json& c = j.at("compression");
        check_keys(c, "compression.",
                   {"ratio", "r_qk", "r_vo", "r_mlp", "qk_method", "ov_method", "mlp_method",
                    "scale_mode", "damping", "recalibrate_after_qk", "overall_dim_limit",
                    "budget_params", "rank_step"});
        auto& cc = cfg.compression;
        cc.ratio = read<double>(c, "compression.", "ratio", cc.ratio);
        cc.r_qk = read<std::size_t>(c, "compression.", "r_qk", cc.r_qk);
        cc.r_vo = read<std::size_t>(c, "compression.", "r_vo", cc.r_vo);
        cc.r_mlp = read<std::size_t>(c, "compression.", "r_mlp", cc.r_mlp);
        cc.qk_method =
            qk_method_from_name(read_str(c, "compression.", "qk_method", qk_method_name(cc.qk_method)));
        cc.ov_method =
            ov_method_from_name(read_str(c, "compression.", "ov_method", ov_method_name(cc.ov_method)));
        cc.mlp_method = mlp_method_from_name(
            read_str(c, "compression.", "mlp_method", mlp_method_name(cc.mlp_method)));
        cc.scale_mode = scale_mode_from_name(
            read_str(c, "compression.", "scale_mode", scale_mode_name(cc.scale_mode)));
        cc.damping = read<double>(c, "compression.", "damping", cc.damping);
        cc.recalibrate_after_qk =
            read<bool>(c, "compression.", "recalibrate_after_qk", cc.recalibrate_after_qk);
        cc.overall_dim_limit =
            read<std::size_t>(c, "compression.", "overall_dim_limit", cc.overall_dim_limit);
        cc.budget_params = read<std::uint64_t>(c, "compression.", "budget_params", cc.budget_params);
        cc.rank_step = read<std::size_t>(c, "compression.", "rank_step", cc.rank_step);
        if (!(cc.damping >= 0.0)) throw ArgumentError("compression.damping must be >= 0");
        const bool any_rank = cc.r_qk || cc.r_vo || cc.r_mlp;
        const bool all_ranks = cc.r_qk && cc.r_vo && cc.r_mlp;
        if (any_rank && !all_ranks)
            throw ArgumentError("explicit ranks need all of r_qk, r_vo, r_mlp");
    }

    if (j.contains("evaluation")) {
        const json& e = j.at("evaluation");
        check_keys(e, "evaluation.",
                   {"batches", "tokens_per_batch", "context_tokens", "element_size"});
        cfg.evaluation.batches =
            read<std::size_t>(e, "evaluation.", "batches", cfg.evaluation.batches);
        cfg.evaluation.tokens_per_batch = read<std::size_t>(e, "evaluation.", "tokens_per_batch",
                                                            cfg.evaluation.tokens_per_batch);
        cfg.evaluation.context_tokens =
            read<std::size_t>(e, "evaluation.", "context_tokens", cfg.evaluation.context_tokens);
        cfg.evaluation.element_size =
            read<std::size_t>(e, "evaluation.", "element_size", cfg.evaluation.element_size);
        if (cfg.evaluation.batches == 0 || cfg.evaluation.tokens_per_batch == 0)
            throw ArgumentError("evaluation.batches and tokens_per_batch must be positive");
        if (cfg.evaluation.element_size == 0)
            throw ArgumentError("evaluation.element_size must be positive");
    }

    cfg.model.validate();
    if (cfg.layers == 0) throw ArgumentError("model.layers must be positive");
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ArgumentError("malformed config '" + path + "': " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["weights_dtype"] = dtype_name(weights_dtype);
    j["model"] = {{"d_m", model.d_m},
                  {"h_q", model.h_q},
                  {"h_kv", model.h_kv},
                  {"d_qk", model.d_qk},
                  {"d_vo", model.d_vo},
                  {"d_inter", model.d_inter},
                  {"layers", layers},
                  {"rope", model.rope},
                  {"rope_theta", model.rope_theta},
                  {"mlp", mlp_variant_name(model.mlp)},
                  {"softmax_scale", model.softmax_scale}};
    j["calibration"] = {{"batches", calibration.batches},
                        {"tokens_per_batch", calibration.tokens_per_batch},
                        {"covariance_decay", calibration.covariance_decay},
                        {"distinct_kv_stream", calibration.distinct_kv_stream}};
    j["compression"] = {{"ratio", compression.ratio},
                        {"r_qk", compression.r_qk},
                        {"r_vo", compression.r_vo},
                        {"r_mlp", compression.r_mlp},
                        {"qk_method", qk_method_name(compression.qk_method)},
                        {"ov_method", ov_method_name(compression.ov_method)},
                        {"mlp_method", mlp_method_name(compression.mlp_method)},
                        {"scale_mode", scale_mode_name(compression.scale_mode)},
                        {"damping", compression.damping},
                        {"recalibrate_after_qk", compression.recalibrate_after_qk},
                        {"overall_dim_limit", compression.overall_dim_limit},
                        {"budget_params", compression.budget_params},
                        {"rank_step", compression.rank_step}};
    j["evaluation"] = {{"batches", evaluation.batches},
                       {"tokens_per_batch", evaluation.tokens_per_batch},
                       {"context_tokens", evaluation.context_tokens},
                       {"element_size", evaluation.element_size}};
    return j;
}

LayerRanks RunConfig::resolve_ranks() const {
    const auto& cc = compression;
    if (cc.r_qk || cc.r_vo || cc.r_mlp) {
        LayerRanks ranks{cc.r_qk, cc.r_vo, cc.r_mlp};
        if (ranks.r_qk > model.d_qk || ranks.r_vo > model.d_vo || ranks.r_mlp > model.d_inter)
            throw ArgumentError("explicit rank exceeds its component dimension");
        if (model.rope && ranks.r_qk % 2 != 0)
            throw ArgumentError("rotary score rank must be even");
        return ranks;
    }
    return ratio_to_ranks(model, cc.ratio);
}

} // namespace lrc
