// SPDX-License-Identifier: Apache-2.0
#include "lrc/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "lrc/baselines.hpp"
#include "lrc/cur.hpp"
#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"
#include "lrc/rng.hpp"
#include "lrc/solver_mlp.hpp"
#include "lrc/solver_ov.hpp"
#include "lrc/solver_qk.hpp"

namespace lrc {

namespace {

// fixed substream tags, shared by every command so that reruns agree
constexpr std::uint64_t kStreamWeights = 1;
constexpr std::uint64_t kStreamCovariance = 2;
constexpr std::uint64_t kStreamCalibration = 3;
constexpr std::uint64_t kStreamKv = 4;
constexpr std::uint64_t kStreamEvaluation = 5;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_u(std::uint64_t v) { return std::to_string(v); }

Matrix scaled_gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m = rng.gaussian_matrix(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] *= scale;
    return m;
}

void reject_compressed_input(const LayerWeights& w, std::size_t layer) {
    if (w.per_query_value || !w.qk_freq_indices.empty())
        throw ArgumentError("layer " + std::to_string(layer) + " is already compressed");
}

std::vector<double> tile(const std::vector<double>& v, std::size_t times) {
    std::vector<double> out;
    out.reserve(v.size() * times);
    for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), v.begin(), v.end());
    return out;
}

} // namespace

Model generate_model(const RunConfig& cfg) {
    cfg.model.validate();
    const ModelConfig& mc = cfg.model;
    Model m;
    m.config = mc;
    Rng rng(mix_seed(cfg.seed, kStreamWeights));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerWeights w;
        for (std::size_t i = 0; i < mc.h_q; ++i) w.wq.push_back(scaled_gaussian(rng, mc.d_m, mc.d_qk));
        for (std::size_t j = 0; j < mc.h_kv; ++j) w.wk.push_back(scaled_gaussian(rng, mc.d_m, mc.d_qk));
        for (std::size_t j = 0; j < mc.h_kv; ++j) w.wv.push_back(scaled_gaussian(rng, mc.d_m, mc.d_vo));
        for (std::size_t i = 0; i < mc.h_q; ++i) w.wo.push_back(scaled_gaussian(rng, mc.d_vo, mc.d_m));
        w.wu = scaled_gaussian(rng, mc.d_m, mc.d_inter);
        if (mc.mlp == MlpVariant::gated_silu) w.wg = scaled_gaussian(rng, mc.d_m, mc.d_inter);
        w.wd = scaled_gaussian(rng, mc.d_inter, mc.d_m);
        validate_weights(w, mc);
        m.layers.push_back(std::move(w));
    }
    return m;
}

std::vector<ActivationBatch> sample_batches(const RunConfig& cfg, std::size_t count,
                                            std::size_t tokens, std::uint64_t stream) {
    if (count == 0 || tokens == 0) throw ArgumentError("sample_batches: empty request");
    Rng cov_rng(mix_seed(cfg.seed, kStreamCovariance));
    const Matrix cov =
        random_covariance(cfg.model.d_m, cfg.calibration.covariance_decay, cov_rng);
    GaussianSampler sampler(psd_sqrt(cov, 0.0));
    Rng rng(mix_seed(cfg.seed, stream));
    std::vector<ActivationBatch> out;
    out.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        ActivationBatch batch;
        batch.x = sampler.sample(tokens, rng);
        batch.positions.resize(tokens);
        for (std::size_t t = 0; t < tokens; ++t) batch.positions[t] = t;
        out.push_back(std::move(batch));
    }
    return out;
}

std::vector<LayerStats> calibrate_model(const Model& m, const RunConfig& cfg) {
    std::vector<ActivationBatch> batches = sample_batches(
        cfg, cfg.calibration.batches, cfg.calibration.tokens_per_batch, kStreamCalibration);
    std::vector<ActivationBatch> kv;
    if (cfg.calibration.distinct_kv_stream)
        kv = sample_batches(cfg, cfg.calibration.batches, cfg.calibration.tokens_per_batch,
                            kStreamKv);
    const bool want_cat = cfg.compression.ov_method == OvMethod::overall;

    std::vector<LayerStats> stats;
    stats.reserve(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        stats.push_back(collect_layer_stats(m.layers[l], m.config, batches,
                                            kv.empty() ? nullptr : &kv, want_cat));
        if (l + 1 < m.layers.size()) {
            for (auto& b : batches) b.x = layer_forward(m.layers[l], m.config, b);
            for (auto& b : kv) b.x = layer_forward(m.layers[l], m.config, b);
        }
    }
    return stats;
}

namespace {

struct QkOutcome {
    std::vector<Matrix> wq;
    std::vector<Matrix> wk;
    std::vector<std::vector<std::size_t>> freq;
    double objective = 0.0;
};

QkOutcome compress_qk(const LayerWeights& w, const ModelConfig& mc, const LayerStats& stats,
                      const CompressionConfig& cc, std::size_t r) {
    QkOutcome out;
    out.wq.resize(mc.h_q);
    out.wk.resize(mc.h_kv);
    const std::size_t g = mc.h_q / mc.h_kv;

    if (!mc.rope) {
        if (cc.qk_method == QkMethod::abs_w || cc.qk_method == QkMethod::wanda)
            throw ArgumentError("qk method '" + std::string(qk_method_name(cc.qk_method)) +
                                "' applies to rotary models only");
        const bool identity_stats = cc.qk_method == QkMethod::clover;
        const Matrix eye = Matrix::identity(mc.d_m);
        for (std::size_t j = 0; j < mc.h_kv; ++j) {
            const std::vector<Matrix> group(w.wq.begin() + j * g, w.wq.begin() + (j + 1) * g);
            const QkSolution sol =
                identity_stats
                    ? solve_qk_gqa(group, w.wk[j], eye, eye, r, 0.0)
                    : solve_qk_gqa(group, w.wk[j], stats.r_qq, stats.r_kv, r, cc.damping);
            for (std::size_t i = 0; i < g; ++i) out.wq[j * g + i] = sol.wq_tilde[i];
            out.wk[j] = sol.wk_tilde;
            out.objective += sol.objective_value;
        }
        return out;
    }

    if (cc.qk_method == QkMethod::clover)
        throw ArgumentError("qk method 'clover' applies to non-rotary models only");
    out.freq.resize(mc.h_q);
    const Matrix s_q = psd_sqrt(stats.r_qq, cc.damping);
    const Matrix s_kv = psd_sqrt(stats.r_kv, cc.damping);
    for (std::size_t j = 0; j < mc.h_kv; ++j) {
        const std::vector<Matrix> group(w.wq.begin() + j * g, w.wq.begin() + (j + 1) * g);
        if (cc.qk_method == QkMethod::whitened) {
            const QkSolution sol =
                solve_qk_rope_gqa(group, w.wk[j], stats.r_qq, stats.r_kv, r, cc.damping);
            for (std::size_t i = 0; i < g; ++i) {
                out.wq[j * g + i] = sol.wq_tilde[i];
                out.freq[j * g + i] = sol.freq_indices;
            }
            out.wk[j] = sol.wk_tilde;
            out.objective += sol.objective_value;
            continue;
        }
        // pruning baselines pick the pairs; the whitened residual is still
        // the reported objective so methods stay comparable
        const Matrix raw_l = vstack(group);
        const Matrix raw_r = transpose(w.wk[j]);
        std::vector<std::size_t> sel;
        if (cc.qk_method == QkMethod::abs_w) {
            sel = prune_abs_w(raw_l, raw_r, r, true);
        } else {
            sel = prune_wanda(raw_l, raw_r, tile(diagonal(stats.r_qq), g),
                              diagonal(stats.r_kv), r, true);
        }
        std::vector<Matrix> white_blocks(g);
        for (std::size_t i = 0; i < g; ++i) white_blocks[i] = multiply(s_q, group[i]);
        out.objective +=
            selection_objective(vstack(white_blocks), multiply(raw_r, s_kv), sel);
        for (std::size_t i = 0; i < g; ++i) {
            out.wq[j * g + i] = select_cols(group[i], sel);
            out.freq[j * g + i] = sel;
        }
        out.wk[j] = select_cols(w.wk[j], sel);
    }
    return out;
}

struct OvOutcome {
    std::vector<Matrix> wv;
    std::vector<Matrix> wo;
    bool per_query_value = false;
    double objective = 0.0;
};

OvOutcome compress_ov(const LayerWeights& w, const ModelConfig& mc, const LayerStats& stats,
                      const CompressionConfig& cc, std::size_t r) {
    OvOutcome out;
    out.wo.resize(mc.h_q);
    const std::size_t g = mc.h_q / mc.h_kv;

    if (cc.ov_method == OvMethod::overall) {
        if (stats.r_p_cat.empty())
            throw ArgumentError("shared-output compression needs the concatenated-context "
                                "moment; calibrate with ov_method=overall");
        std::vector<Matrix> wv_per_head(mc.h_q);
        for (std::size_t i = 0; i < mc.h_q; ++i) wv_per_head[i] = w.wv[i / g];
        const OvSolution sol = solve_ov_overall(wv_per_head, w.wo, stats.r_p_cat, r,
                                                cc.damping, cc.overall_dim_limit);
        out.per_query_value = true;
        out.wv.resize(mc.h_q);
        for (std::size_t i = 0; i < mc.h_q; ++i) {
            out.wv[i] = slice_rows(sol.wv_tilde, i * mc.d_m, (i + 1) * mc.d_m);
            out.wo[i] = sol.wo_tilde[0];
        }
        out.objective = sol.objective_value;
        return out;
    }

    const bool identity_stats = cc.ov_method == OvMethod::plain;
    const double damping = identity_stats ? 0.0 : cc.damping;
    const Matrix eye = Matrix::identity(mc.d_m);
    out.wv.resize(mc.h_kv);
    if (g == 1) {
        for (std::size_t i = 0; i < mc.h_q; ++i) {
            const OvSolution sol =
                solve_ov_mha(w.wv[i], w.wo[i], identity_stats ? eye : stats.r_p[i], r, damping);
            out.wv[i] = sol.wv_tilde;
            out.wo[i] = sol.wo_tilde[0];
            out.objective += sol.objective_value;
        }
    } else {
        for (std::size_t j = 0; j < mc.h_kv; ++j) {
            const std::vector<Matrix> group(w.wo.begin() + j * g, w.wo.begin() + (j + 1) * g);
            const OvSolution sol =
                solve_ov_gqa(w.wv[j], group, identity_stats ? eye : stats.r_kv, r, damping);
            out.wv[j] = sol.wv_tilde;
            for (std::size_t i = 0; i < g; ++i) out.wo[j * g + i] = sol.wo_tilde[i];
            out.objective += sol.objective_value;
        }
    }
    return out;
}

MlpSolution compress_mlp_select(const LayerWeights& w, const ModelConfig& mc,
                                const LayerStats& stats, const CompressionConfig& cc,
                                std::size_t r) {
    if (cc.mlp_method == MlpMethod::whitened)
        return mlp_cur_select(stats.r_d, w.wd, r, cc.scale_mode, cc.damping);

    std::vector<std::size_t> sel;
    if (cc.mlp_method == MlpMethod::abs_w) {
        const Matrix up = mc.mlp == MlpVariant::gated_silu ? vstack({w.wu, w.wg}) : w.wu;
        sel = prune_abs_w(up, w.wd, r, false);
    } else {
        sel = prune_wanda(Matrix::identity(w.wd.rows()), w.wd, diagonal(stats.r_d),
                          std::vector<double>(mc.d_m, 1.0), r, false);
    }
    MlpSolution sol;
    sol.selected = sel;
    sol.u_values.assign(sel.size(), 1.0);
    sol.scale_mode = CurScaleMode::none;
    sol.objective_value = selection_objective(psd_sqrt(stats.r_d, cc.damping), w.wd, sel);
    return sol;
}

} // namespace

CompressionResult compress_model_with_ranks(const Model& m, const std::vector<LayerStats>& stats,
                                            const RunConfig& cfg,
                                            const std::vector<LayerRanks>& ranks) {
    if (stats.size() != m.layers.size())
        throw ArgumentError("compress: statistics do not cover every layer");
    if (ranks.size() != m.layers.size())
        throw ArgumentError("compress: rank plan does not cover every layer");
    const ModelConfig& mc = m.config;
    const CompressionConfig& cc = cfg.compression;

    std::vector<ActivationBatch> calib, kv;
    if (cc.recalibrate_after_qk) {
        calib = sample_batches(cfg, cfg.calibration.batches, cfg.calibration.tokens_per_batch,
                               kStreamCalibration);
        if (cfg.calibration.distinct_kv_stream)
            kv = sample_batches(cfg, cfg.calibration.batches, cfg.calibration.tokens_per_batch,
                                kStreamKv);
    }

    CompressionResult result;
    result.compressed.config = mc;
    result.ranks = ranks;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const LayerWeights& w = m.layers[l];
        reject_compressed_input(w, l);

        QkOutcome qk = compress_qk(w, mc, stats[l], cc, ranks[l].r_qk);

        const LayerStats* ov_stats = &stats[l];
        LayerStats recalibrated;
        if (cc.recalibrate_after_qk) {
            LayerWeights hybrid = w;
            hybrid.wq = qk.wq;
            hybrid.wk = qk.wk;
            hybrid.qk_freq_indices = qk.freq;
            recalibrated = collect_layer_stats(hybrid, mc, calib, kv.empty() ? nullptr : &kv,
                                               cc.ov_method == OvMethod::overall);
            ov_stats = &recalibrated;
        }

        OvOutcome ov = compress_ov(w, mc, *ov_stats, cc, ranks[l].r_vo);
        const MlpSolution mlp_sol = compress_mlp_select(w, mc, *ov_stats, cc, ranks[l].r_mlp);
        const MlpCompressed mlp = compress_mlp(w.wu, w.wg, w.wd, mlp_sol);

        LayerWeights out;
        out.wq = std::move(qk.wq);
        out.wk = std::move(qk.wk);
        out.qk_freq_indices = std::move(qk.freq);
        out.wv = std::move(ov.wv);
        out.wo = std::move(ov.wo);
        out.per_query_value = ov.per_query_value;
        out.wu = mlp.wu;
        out.wg = mlp.wg;
        out.wd = mlp.wd;
        validate_weights(out, mc);
        result.compressed.layers.push_back(std::move(out));
        result.qk_objective.push_back(qk.objective);
        result.ov_objective.push_back(ov.objective);
        result.mlp_objective.push_back(mlp_sol.objective_value);

        if (cc.recalibrate_after_qk && l + 1 < m.layers.size()) {
            for (auto& b : calib) b.x = layer_forward(w, mc, b);
            for (auto& b : kv) b.x = layer_forward(w, mc, b);
        }
    }
    return result;
}

CompressionResult compress_model(const Model& m, const std::vector<LayerStats>& stats,
                                 const RunConfig& cfg) {
    const LayerRanks ranks = cfg.resolve_ranks();
    return compress_model_with_ranks(m, stats, cfg,
                                     std::vector<LayerRanks>(m.layers.size(), ranks));
}

ErrorReport evaluate_models(const Model& original, const Model& compressed,
                            const RunConfig& cfg) {
    const std::vector<ActivationBatch> batches = sample_batches(
        cfg, cfg.evaluation.batches, cfg.evaluation.tokens_per_batch, kStreamEvaluation);
    ErrorReport report;
    report.layers = functional_errors(original, compressed, batches);
    report.accounting = accounting(original, compressed, cfg.evaluation.context_tokens,
                                   cfg.evaluation.element_size);
    return report;
}

namespace {

void append_run_section(std::string& text, const RunConfig& cfg) {
    const ModelConfig& mc = cfg.model;
    text += "[run]\n";
    text += "seed=" + fmt_u(cfg.seed) + "\n";
    text += "d_m=" + fmt_u(mc.d_m) + "\n";
    text += "h_q=" + fmt_u(mc.h_q) + "\n";
    text += "h_kv=" + fmt_u(mc.h_kv) + "\n";
    text += "d_qk=" + fmt_u(mc.d_qk) + "\n";
    text += "d_vo=" + fmt_u(mc.d_vo) + "\n";
    text += "d_inter=" + fmt_u(mc.d_inter) + "\n";
    text += "layers=" + fmt_u(cfg.layers) + "\n";
    text += std::string("rope=") + (mc.rope ? "1" : "0") + "\n";
    text += std::string("mlp=") + mlp_variant_name(mc.mlp) + "\n";
    text += std::string("qk_method=") + qk_method_name(cfg.compression.qk_method) + "\n";
    text += std::string("ov_method=") + ov_method_name(cfg.compression.ov_method) + "\n";
    text += std::string("mlp_method=") + mlp_method_name(cfg.compression.mlp_method) + "\n";
    text += std::string("scale_mode=") + scale_mode_name(cfg.compression.scale_mode) + "\n";
    text += "damping=" + fmt(cfg.compression.damping) + "\n";
}

} // namespace

std::string format_report(const RunConfig& cfg, const Model& original, const Model& compressed,
                          const ErrorReport& report) {
    std::string text;
    append_run_section(text, cfg);
    text += "evaluation_batches=" + fmt_u(cfg.evaluation.batches) + "\n";
    text += "evaluation_tokens=" + fmt_u(cfg.evaluation.tokens_per_batch) + "\n";

    text += "\n[plan]\n";
    for (std::size_t l = 0; l < compressed.layers.size(); ++l) {
        const LayerWeights& w = compressed.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        text += p + "r_qk=" + fmt_u(w.wq[0].cols()) + "\n";
        text += p + "r_vo=" + fmt_u(w.wv[0].cols()) + "\n";
        text += p + "r_mlp=" + fmt_u(w.wd.rows()) + "\n";
    }

    text += "\n[errors]\n";
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
        const LayerErrors& e = report.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        text += p + "score_mse=" + fmt(e.score_mse()) + "\n";
        text += p + "score_rel=" + fmt(e.score_rel()) + "\n";
        text += p + "output_mse=" + fmt(e.output_mse()) + "\n";
        text += p + "output_rel=" + fmt(e.output_rel()) + "\n";
        text += p + "mlp_mse=" + fmt(e.mlp_mse()) + "\n";
        text += p + "mlp_rel=" + fmt(e.mlp_rel()) + "\n";
    }
    text += "total_functional_error=" + fmt(total_functional_error(report.layers)) + "\n";

    const Accounting& a = report.accounting;
    text += "\n[accounting]\n";
    text += "params_before=" + fmt_u(a.params_before) + "\n";
    text += "params_after=" + fmt_u(a.params_after) + "\n";
    text += "flops_per_token_before=" + fmt_u(a.flops_before) + "\n";
    text += "flops_per_token_after=" + fmt_u(a.flops_after) + "\n";
    text += "kv_bytes_per_token_before=" + fmt_u(a.kv_bytes_before) + "\n";
    text += "kv_bytes_per_token_after=" + fmt_u(a.kv_bytes_after) + "\n";
    text += "context_tokens=" + fmt_u(a.context_tokens) + "\n";
    text += "element_size=" + fmt_u(a.element_size) + "\n";
    (void)original;
    return text;
}

std::string format_plan(const RunConfig& cfg, const CompressionResult& result) {
    std::string text;
    append_run_section(text, cfg);
    text += "\n[plan]\n";
    std::uint64_t params_after = 0;
    for (std::size_t l = 0; l < result.ranks.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        text += p + "r_qk=" + fmt_u(result.ranks[l].r_qk) + "\n";
        text += p + "r_vo=" + fmt_u(result.ranks[l].r_vo) + "\n";
        text += p + "r_mlp=" + fmt_u(result.ranks[l].r_mlp) + "\n";
        text += p + "qk_objective=" + fmt(result.qk_objective[l]) + "\n";
        text += p + "ov_objective=" + fmt(result.ov_objective[l]) + "\n";
        text += p + "mlp_objective=" + fmt(result.mlp_objective[l]) + "\n";
        params_after += params_for_ranks(cfg.model, result.ranks[l]);
    }
    text += "params_after=" + fmt_u(attention_mlp_params(result.compressed)) + "\n";
    text += "params_after_closed_form=" + fmt_u(params_after) + "\n";
    return text;
}

std::string sweep_component(const Model& m, const std::vector<LayerStats>& stats,
                            const RunConfig& cfg, const std::string& component) {
    const ModelConfig& mc = m.config;
    std::size_t full, step = 1, start = 1;
    if (component == "qk") {
        full = std::min(mc.d_qk, mc.d_m);
        if (mc.rope) {
            start = 2;
            step = 2;
        }
    } else if (component == "ov") {
        full = std::min(mc.d_vo, mc.d_m);
    } else if (component == "mlp") {
        full = mc.d_inter;
    } else {
        throw ArgumentError("sweep component must be qk, ov, or mlp");
    }

    const LayerRanks full_ranks{std::min(mc.d_qk, mc.d_m), std::min(mc.d_vo, mc.d_m),
                                mc.d_inter};
    std::string csv = "component,rank,layer,objective,score_mse,output_mse,mlp_mse\n";
    for (std::size_t r = start; r <= full; r += step) {
        LayerRanks ranks = full_ranks;
        if (component == "qk") ranks.r_qk = r;
        if (component == "ov") ranks.r_vo = r;
        if (component == "mlp") ranks.r_mlp = r;
        const CompressionResult result = compress_model_with_ranks(
            m, stats, cfg, std::vector<LayerRanks>(m.layers.size(), ranks));
        const ErrorReport report = evaluate_models(m, result.compressed, cfg);
        for (std::size_t l = 0; l < report.layers.size(); ++l) {
            const double obj = component == "qk"   ? result.qk_objective[l]
                               : component == "ov" ? result.ov_objective[l]
                                                   : result.mlp_objective[l];
            csv += component + "," + fmt_u(r) + "," + fmt_u(l) + "," + fmt(obj) + "," +
                   fmt(report.layers[l].score_mse()) + "," + fmt(report.layers[l].output_mse()) +
                   "," + fmt(report.layers[l].mlp_mse()) + "\n";
        }
    }
    return csv;
}

namespace {

Matrix indices_to_matrix(const std::vector<std::size_t>& idx) {
    Matrix m(1, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) m(0, k) = static_cast<double>(idx[k]);
    return m;
}

std::vector<std::size_t> matrix_to_indices(const Matrix& m) {
    std::vector<std::size_t> idx(m.size());
    for (std::size_t k = 0; k < m.size(); ++k) {
        const double v = m.data()[k];
        if (!(v >= 0.0) || v != std::floor(v))
            throw IoError("stored index entry is not a whole number");
        idx[k] = static_cast<std::size_t>(v);
    }
    return idx;
}

} // namespace

void save_model(const Model& m, const std::string& path, Dtype weights_dtype) {
    TensorStoreWriter writer;
    const ModelConfig& mc = m.config;
    writer.add_scalar("config.d_m", static_cast<double>(mc.d_m));
    writer.add_scalar("config.h_q", static_cast<double>(mc.h_q));
    writer.add_scalar("config.h_kv", static_cast<double>(mc.h_kv));
    writer.add_scalar("config.d_qk", static_cast<double>(mc.d_qk));
    writer.add_scalar("config.d_vo", static_cast<double>(mc.d_vo));
    writer.add_scalar("config.d_inter", static_cast<double>(mc.d_inter));
    writer.add_scalar("config.layers", static_cast<double>(m.layers.size()));
    writer.add_scalar("config.rope", mc.rope ? 1.0 : 0.0);
    writer.add_scalar("config.rope_theta", mc.rope_theta);
    writer.add_scalar("config.mlp", mc.mlp == MlpVariant::gated_silu ? 1.0 : 0.0);
    writer.add_scalar("config.softmax_scale", mc.softmax_scale);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const LayerWeights& w = m.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        writer.add_scalar(p + "per_query_value", w.per_query_value ? 1.0 : 0.0);
        for (std::size_t i = 0; i < w.wq.size(); ++i)
            writer.add(p + "wq" + std::to_string(i), w.wq[i], weights_dtype);
        for (std::size_t j = 0; j < w.wk.size(); ++j)
            writer.add(p + "wk" + std::to_string(j), w.wk[j], weights_dtype);
        for (std::size_t j = 0; j < w.wv.size(); ++j)
            writer.add(p + "wv" + std::to_string(j), w.wv[j], weights_dtype);
        for (std::size_t i = 0; i < w.wo.size(); ++i)
            writer.add(p + "wo" + std::to_string(i), w.wo[i], weights_dtype);
        writer.add(p + "wu", w.wu, weights_dtype);
        if (!w.wg.empty()) writer.add(p + "wg", w.wg, weights_dtype);
        writer.add(p + "wd", w.wd, weights_dtype);
        for (std::size_t i = 0; i < w.qk_freq_indices.size(); ++i)
            writer.add(p + "freq" + std::to_string(i), indices_to_matrix(w.qk_freq_indices[i]));
    }
    writer.write(path);
}

Model load_model(const std::string& path) {
    const TensorStore store = TensorStore::load(path);
    Model m;
    ModelConfig& mc = m.config;
    mc.d_m = static_cast<std::size_t>(store.scalar("config.d_m"));
    mc.h_q = static_cast<std::size_t>(store.scalar("config.h_q"));
    mc.h_kv = static_cast<std::size_t>(store.scalar("config.h_kv"));
    mc.d_qk = static_cast<std::size_t>(store.scalar("config.d_qk"));
    mc.d_vo = static_cast<std::size_t>(store.scalar("config.d_vo"));
    mc.d_inter = static_cast<std::size_t>(store.scalar("config.d_inter"));
    mc.rope = store.scalar("config.rope") != 0.0;
    mc.rope_theta = store.scalar("config.rope_theta");
    mc.mlp = store.scalar("config.mlp") != 0.0 ? MlpVariant::gated_silu
                                               : MlpVariant::two_layer_relu;
    mc.softmax_scale = store.scalar("config.softmax_scale");
    mc.validate();

    const std::size_t layers = static_cast<std::size_t>(store.scalar("config.layers"));
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerWeights w;
        w.per_query_value = store.scalar(p + "per_query_value") != 0.0;
        const std::size_t value_heads = w.per_query_value ? mc.h_q : mc.h_kv;
        for (std::size_t i = 0; i < mc.h_q; ++i) w.wq.push_back(store.matrix(p + "wq" + std::to_string(i)));
        for (std::size_t j = 0; j < mc.h_kv; ++j) w.wk.push_back(store.matrix(p + "wk" + std::to_string(j)));
        for (std::size_t j = 0; j < value_heads; ++j) w.wv.push_back(store.matrix(p + "wv" + std::to_string(j)));
        for (std::size_t i = 0; i < mc.h_q; ++i) w.wo.push_back(store.matrix(p + "wo" + std::to_string(i)));
        w.wu = store.matrix(p + "wu");
        if (store.contains(p + "wg")) w.wg = store.matrix(p + "wg");
        w.wd = store.matrix(p + "wd");
        if (store.contains(p + "freq0")) {
            for (std::size_t i = 0; i < mc.h_q; ++i)
                w.qk_freq_indices.push_back(
                    matrix_to_indices(store.matrix(p + "freq" + std::to_string(i))));
        }
        validate_weights(w, mc);
        m.layers.push_back(std::move(w));
    }
    return m;
}

void save_stats(const std::vector<LayerStats>& stats, const std::string& path) {
    TensorStoreWriter writer;
    writer.add_scalar("stats.layers", static_cast<double>(stats.size()));
    for (std::size_t l = 0; l < stats.size(); ++l) {
        const LayerStats& s = stats[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        writer.add(p + "r_qq", s.r_qq);
        writer.add(p + "r_kv", s.r_kv);
        for (std::size_t i = 0; i < s.r_p.size(); ++i)
            writer.add(p + "r_p" + std::to_string(i), s.r_p[i]);
        writer.add(p + "r_d", s.r_d);
        if (!s.r_p_cat.empty()) writer.add(p + "r_p_cat", s.r_p_cat);
        writer.add_scalar(p + "samples", static_cast<double>(s.sample_count));
    }
    writer.write(path);
}

std::vector<LayerStats> load_stats(const std::string& path) {
    const TensorStore store = TensorStore::load(path);
    const std::size_t layers = static_cast<std::size_t>(store.scalar("stats.layers"));
    std::vector<LayerStats> stats(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerStats& s = stats[l];
        s.r_qq = store.matrix(p + "r_qq");
        s.r_kv = store.matrix(p + "r_kv");
        for (std::size_t i = 0; store.contains(p + "r_p" + std::to_string(i)); ++i)
            s.r_p.push_back(store.matrix(p + "r_p" + std::to_string(i)));
        s.r_d = store.matrix(p + "r_d");
        if (store.contains(p + "r_p_cat")) s.r_p_cat = store.matrix(p + "r_p_cat");
        s.sample_count = static_cast<std::size_t>(store.scalar(p + "samples"));
    }
    return stats;
}

} // namespace lrc
