// SPDX-License-Identifier: Apache-2.0
#include "lrc/model.hpp"

#include <cmath>
#include <string>

#include "lrc/errors.hpp"

namespace lrc {

namespace {

double silu(double x) {
    // sigmoid split keeps exp() in the stable half-plane
    if (x >= 0.0) return x / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return x * e / (1.0 + e);
}

void rotate_rows(Matrix& m, const std::vector<std::size_t>& positions,
                 const std::vector<std::size_t>* freq_indices, std::size_t d_qk_original,
                 double theta) {
    std::vector<double> row(m.cols());
    for (std::size_t t = 0; t < m.rows(); ++t) {
        for (std::size_t j = 0; j < m.cols(); ++j) row[j] = m(t, j);
        const auto rotated = rope_rotate(row, positions[t], freq_indices, d_qk_original, theta);
        for (std::size_t j = 0; j < m.cols(); ++j) m(t, j) = rotated[j];
    }
}

} // namespace

double ModelConfig::score_scale() const {
    return softmax_scale > 0.0 ? softmax_scale : std::sqrt(static_cast<double>(d_qk));
}

void ModelConfig::validate() const {
    if (d_m == 0 || h_q == 0 || h_kv == 0 || d_qk == 0 || d_vo == 0 || d_inter == 0)
        throw ArgumentError("config: all dimensions must be positive");
    if (h_q % h_kv != 0)
        throw ArgumentError("config: h_q=" + std::to_string(h_q) + " not divisible by h_kv=" +
                            std::to_string(h_kv));
    if (rope && d_qk % 2 != 0)
        throw ArgumentError("config: rotary positions need even d_qk, got " + std::to_string(d_qk));
    if (rope && rope_theta <= 0.0) throw ArgumentError("config: rope_theta must be positive");
    if (softmax_scale < 0.0) throw ArgumentError("config: negative softmax_scale");
}

std::vector<double> rope_rotate(const std::vector<double>& v, std::size_t pos,
                                const std::vector<std::size_t>* freq_indices,
                                std::size_t d_qk_original, double rope_theta) {
    const std::size_t d = v.size();
    if (d % 2 != 0) throw ArgumentError("rope_rotate: odd vector length " + std::to_string(d));
    const bool mapped = freq_indices != nullptr && !freq_indices->empty();
    if (mapped && freq_indices->size() != d)
        throw ArgumentError("rope_rotate: frequency map length mismatch");
    if (!mapped && d != d_qk_original)
        throw ArgumentError("rope_rotate: reduced vector without a frequency map");

    std::vector<double> out(d);
    for (std::size_t j = 0; 2 * j < d; ++j) {
        std::size_t pair = j;
        if (mapped) {
            const std::size_t lo = (*freq_indices)[2 * j];
            const std::size_t hi = (*freq_indices)[2 * j + 1];
            if (hi != lo + 1 || lo % 2 != 0)
                throw ArgumentError("rope_rotate: frequency map breaks (2j, 2j+1) pairing");
            pair = lo / 2;
        }
        const double omega =
            std::pow(rope_theta, -2.0 * static_cast<double>(pair) / static_cast<double>(d_qk_original));
        const double angle = static_cast<double>(pos) * omega;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double a = v[2 * j];
        const double b = v[2 * j + 1];
        out[2 * j] = c * a - s * b;
        out[2 * j + 1] = s * a + c * b;
    }
    return out;
}

void validate_batch(const ActivationBatch& batch, const ModelConfig& cfg) {
    if (batch.x.rows() == 0) throw ArgumentError("batch: empty");
    if (batch.x.cols() != cfg.d_m)
        throw ArgumentError("batch: width " + std::to_string(batch.x.cols()) + " != d_m " +
                            std::to_string(cfg.d_m));
    if (batch.positions.size() != batch.x.rows())
        throw ArgumentError("batch: positions length mismatch");
    for (std::size_t t = 1; t < batch.positions.size(); ++t)
        if (batch.positions[t] <= batch.positions[t - 1])
            throw ArgumentError("batch: positions must be strictly increasing");
    if (!all_finite(batch.x)) throw ArgumentError("batch: non-finite activations");
}

void validate_weights(const LayerWeights& w, const ModelConfig& cfg) {
    if (w.wq.size() != cfg.h_q || w.wo.size() != cfg.h_q)
        throw ArgumentError("weights: expected " + std::to_string(cfg.h_q) + " q/o heads");
    if (w.wk.size() != cfg.h_kv)
        throw ArgumentError("weights: expected " + std::to_string(cfg.h_kv) + " k heads");
    const std::size_t value_heads = w.per_query_value ? cfg.h_q : cfg.h_kv;
    if (w.wv.size() != value_heads)
        throw ArgumentError("weights: expected " + std::to_string(value_heads) + " v heads");
    for (std::size_t i = 0; i < cfg.h_q; ++i) {
        const std::size_t kv = cfg.kv_head(i);
        if (w.wq[i].rows() != cfg.d_m || w.wk[kv].rows() != cfg.d_m)
            throw ArgumentError("weights: q/k projection height != d_m");
        if (w.wq[i].cols() != w.wk[kv].cols())
            throw ArgumentError("weights: q/k width mismatch on head " + std::to_string(i));
        const std::size_t vh = w.value_head(cfg, i);
        if (w.wv[vh].rows() != cfg.d_m)
            throw ArgumentError("weights: v projection height != d_m");
        if (w.wv[vh].cols() != w.wo[i].rows())
            throw ArgumentError("weights: v/o inner dim mismatch on head " + std::to_string(i));
        if (w.wo[i].cols() != cfg.d_m)
            throw ArgumentError("weights: o projection width != d_m");
    }
    if (!w.qk_freq_indices.empty()) {
        if (w.qk_freq_indices.size() != cfg.h_q)
            throw ArgumentError("weights: frequency maps must cover every query head");
        // cached keys serve a whole kv group, so the maps must agree within it
        for (std::size_t i = 0; i < cfg.h_q; ++i) {
            const std::size_t owner = cfg.kv_head(i) * cfg.group_size();
            if (w.qk_freq_indices[i] != w.qk_freq_indices[owner])
                throw ArgumentError("weights: frequency maps differ inside kv group of head " +
                                    std::to_string(i));
        }
    }
    if (w.wu.rows() != cfg.d_m || w.wd.cols() != cfg.d_m || w.wu.cols() != w.wd.rows())
        throw ArgumentError("weights: mlp shape mismatch");
    if (cfg.mlp == MlpVariant::gated_silu) {
        if (w.wg.rows() != cfg.d_m || w.wg.cols() != w.wu.cols())
            throw ArgumentError("weights: gated mlp needs wg matching wu");
    }
}

HeadScores attention_scores(const LayerWeights& w, const ModelConfig& cfg,
                            const ActivationBatch& batch, std::size_t head) {
    if (head >= cfg.h_q) throw ArgumentError("attention_scores: head out of range");
    validate_batch(batch, cfg);
    const std::size_t kv = cfg.kv_head(head);
    Matrix q = multiply(batch.x, w.wq[head]);
    Matrix k = multiply(batch.x, w.wk[kv]);

    if (cfg.rope) {
        const std::vector<std::size_t>* map = nullptr;
        if (!w.qk_freq_indices.empty() && !w.qk_freq_indices[head].empty())
            map = &w.qk_freq_indices[head];
        rotate_rows(q, batch.positions, map, cfg.d_qk, cfg.rope_theta);
        rotate_rows(k, batch.positions, map, cfg.d_qk, cfg.rope_theta);
    }

    const std::size_t t_len = batch.x.rows();
    HeadScores out;
    out.pre = multiply(q, transpose(k));
    out.post = Matrix(t_len, t_len);
    const double scale = cfg.score_scale();
    for (std::size_t s = 0; s < t_len; ++s) {
        double m = -1e308;
        for (std::size_t t = 0; t <= s; ++t) m = std::max(m, out.pre(s, t) / scale);
        double sum = 0.0;
        for (std::size_t t = 0; t <= s; ++t) {
            const double e = std::exp(out.pre(s, t) / scale - m);
            out.post(s, t) = e;
            sum += e;
        }
        for (std::size_t t = 0; t <= s; ++t) out.post(s, t) /= sum;
    }
    return out;
}

Matrix attention_context(const HeadScores& scores, const Matrix& x) {
    return multiply(scores.post, x);
}

Matrix attention_head_output(const LayerWeights& w, const ModelConfig& cfg,
                             const ActivationBatch& batch, std::size_t head) {
    const HeadScores scores = attention_scores(w, cfg, batch, head);
    const Matrix p = attention_context(scores, batch.x);
    const std::size_t vh = w.value_head(cfg, head);
    return multiply(multiply(p, w.wv[vh]), w.wo[head]);
}

Matrix attention_output(const LayerWeights& w, const ModelConfig& cfg,
                        const ActivationBatch& batch) {
    validate_weights(w, cfg);
    Matrix out(batch.x.rows(), cfg.d_m);
    for (std::size_t i = 0; i < cfg.h_q; ++i)
        out = out + attention_head_output(w, cfg, batch, i);
    return out;
}

MlpOut mlp_forward(const LayerWeights& w, const ModelConfig& cfg, const Matrix& x) {
    if (x.cols() != cfg.d_m) throw ArgumentError("mlp_forward: input width != d_m");
    MlpOut out;
    Matrix up = multiply(x, w.wu);
    if (cfg.mlp == MlpVariant::two_layer_relu) {
        for (std::size_t k = 0; k < up.size(); ++k)
            up.data()[k] = up.data()[k] > 0.0 ? up.data()[k] : 0.0;
        out.hidden = std::move(up);
    } else {
        if (w.wg.empty()) throw ArgumentError("mlp_forward: gated variant without wg");
        Matrix gate = multiply(x, w.wg);
        for (std::size_t k = 0; k < gate.size(); ++k)
            gate.data()[k] = silu(gate.data()[k]) * up.data()[k];
        out.hidden = std::move(gate);
    }
    out.y = multiply(out.hidden, w.wd);
    return out;
}

Matrix layer_forward(const LayerWeights& w, const ModelConfig& cfg, const ActivationBatch& batch) {
    return mlp_forward(w, cfg, attention_output(w, cfg, batch)).y;
}

std::size_t kv_cache_elements_per_token(const LayerWeights& w, const ModelConfig& cfg) {
    validate_weights(w, cfg);
    std::size_t appended = 0;
    for (std::size_t j = 0; j < w.wk.size(); ++j) appended += w.wk[j].cols();
    for (std::size_t j = 0; j < w.wv.size(); ++j) appended += w.wv[j].cols();
    return appended;
}

Matrix attention_output_decode(const LayerWeights& w, const ModelConfig& cfg,
                               const ActivationBatch& batch, KvCacheProbe* probe) {
    validate_weights(w, cfg);
    validate_batch(batch, cfg);
    const std::size_t t_len = batch.x.rows();
    const double scale = cfg.score_scale();

    // one growing cache per k head and per value carrier
    std::vector<std::vector<std::vector<double>>> k_cache(w.wk.size());
    std::vector<std::vector<std::vector<double>>> v_cache(w.wv.size());

    auto project_row = [&](const Matrix& proj, std::size_t t) {
        std::vector<double> out(proj.cols(), 0.0);
        for (std::size_t i = 0; i < proj.rows(); ++i) {
            const double xi = batch.x(t, i);
            for (std::size_t j = 0; j < proj.cols(); ++j) out[j] += xi * proj(i, j);
        }
        return out;
    };

    Matrix out(t_len, cfg.d_m);
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < w.wk.size(); ++j) {
            auto k_row = project_row(w.wk[j], t);
            if (cfg.rope) {
                const std::vector<std::size_t>* map = nullptr;
                // all query heads of a kv group share one frequency map
                const std::size_t owner = j * cfg.group_size();
                if (!w.qk_freq_indices.empty() && !w.qk_freq_indices[owner].empty())
                    map = &w.qk_freq_indices[owner];
                k_row = rope_rotate(k_row, batch.positions[t], map, cfg.d_qk, cfg.rope_theta);
            }
            if (probe) probe->elements += k_row.size();
            k_cache[j].push_back(std::move(k_row));
        }
        for (std::size_t j = 0; j < w.wv.size(); ++j) {
            auto v_row = project_row(w.wv[j], t);
            if (probe) probe->elements += v_row.size();
            v_cache[j].push_back(std::move(v_row));
        }
        if (probe) probe->tokens += 1;

        for (std::size_t head = 0; head < cfg.h_q; ++head) {
            auto q_row = project_row(w.wq[head], t);
            if (cfg.rope) {
                const std::vector<std::size_t>* map = nullptr;
                if (!w.qk_freq_indices.empty() && !w.qk_freq_indices[head].empty())
                    map = &w.qk_freq_indices[head];
                q_row = rope_rotate(q_row, batch.positions[t], map, cfg.d_qk, cfg.rope_theta);
            }
            const auto& keys = k_cache[cfg.kv_head(head)];
            std::vector<double> logits(t + 1);
            double m = -1e308;
            for (std::size_t s = 0; s <= t; ++s) {
                double dot = 0.0;
                for (std::size_t j = 0; j < q_row.size(); ++j) dot += q_row[j] * keys[s][j];
                logits[s] = dot / scale;
                m = std::max(m, logits[s]);
            }
            double sum = 0.0;
            for (std::size_t s = 0; s <= t; ++s) {
                logits[s] = std::exp(logits[s] - m);
                sum += logits[s];
            }
            const auto& values = v_cache[w.value_head(cfg, head)];
            std::vector<double> ctx(values[0].size(), 0.0);
            for (std::size_t s = 0; s <= t; ++s) {
                const double a = logits[s] / sum;
                for (std::size_t j = 0; j < ctx.size(); ++j) ctx[j] += a * values[s][j];
            }
            const Matrix& wo = w.wo[head];
            for (std::size_t i = 0; i < wo.rows(); ++i)
                for (std::size_t j = 0; j < cfg.d_m; ++j) out(t, j) += ctx[i] * wo(i, j);
        }
    }
    return out;
}

} // namespace lrc
