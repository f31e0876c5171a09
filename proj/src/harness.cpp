// SPDX-License-Identifier: Apache-2.0
#include "lrc/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "lrc/cur.hpp"
#include "lrc/decomp.hpp"
#include "lrc/errors.hpp"
#include "lrc/rng.hpp"
#include "lrc/solver_ov.hpp"
#include "lrc/solver_qk.hpp"

namespace lrc {

namespace {

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

} // namespace

double LayerErrors::score_mse() const {
    const double entries = static_cast<double>(score_entries) * static_cast<double>(heads);
    return entries > 0.0 ? score_sq / entries : 0.0;
}

double LayerErrors::output_mse() const {
    return tokens > 0 ? output_sq / static_cast<double>(tokens) : 0.0;
}

double LayerErrors::mlp_mse() const {
    return tokens > 0 ? mlp_sq / static_cast<double>(tokens) : 0.0;
}

double LayerErrors::score_rel() const { return safe_ratio(score_sq, score_ref_sq); }
double LayerErrors::output_rel() const { return safe_ratio(output_sq, output_ref_sq); }
double LayerErrors::mlp_rel() const { return safe_ratio(mlp_sq, mlp_ref_sq); }

std::vector<LayerErrors> functional_errors(const Model& original, const Model& compressed,
                                           const std::vector<ActivationBatch>& batches) {
    if (original.layers.size() != compressed.layers.size())
        throw ArgumentError("functional_errors: layer count mismatch");
    if (batches.empty()) throw ArgumentError("functional_errors: no batches");
    const ModelConfig& cfg = original.config;

    std::vector<LayerErrors> out(original.layers.size());
    std::vector<ActivationBatch> streams = batches;
    for (std::size_t l = 0; l < original.layers.size(); ++l) {
        const LayerWeights& wo = original.layers[l];
        const LayerWeights& wc = compressed.layers[l];
        LayerErrors& err = out[l];
        err.heads = cfg.h_q;

        for (auto& batch : streams) {
            const std::size_t t_len = batch.x.rows();
            for (std::size_t head = 0; head < cfg.h_q; ++head) {
                const Matrix pre_o = attention_scores(wo, cfg, batch, head).pre;
                const Matrix pre_c = attention_scores(wc, compressed.config, batch, head).pre;
                for (std::size_t s = 0; s < t_len; ++s)
                    for (std::size_t t = 0; t <= s; ++t) {
                        const double d = pre_o(s, t) - pre_c(s, t);
                        err.score_sq += d * d;
                        err.score_ref_sq += pre_o(s, t) * pre_o(s, t);
                    }
            }
            err.score_entries += t_len * (t_len + 1) / 2;

            const Matrix attn_o = attention_output(wo, cfg, batch);
            const Matrix attn_c = attention_output(wc, compressed.config, batch);
            err.output_sq += frobenius_sq(attn_o - attn_c);
            err.output_ref_sq += frobenius_sq(attn_o);
            err.tokens += t_len;

            // the mlp gap is isolated on the original attention stream
            const Matrix y_o = mlp_forward(wo, cfg, attn_o).y;
            const Matrix y_c = mlp_forward(wc, compressed.config, attn_o).y;
            err.mlp_sq += frobenius_sq(y_o - y_c);
            err.mlp_ref_sq += frobenius_sq(y_o);

            batch.x = y_o; // next layer's input stream, original model
        }
    }
    return out;
}

double total_functional_error(const std::vector<LayerErrors>& layers) {
    double total = 0.0;
    for (const auto& e : layers) {
        if (e.score_entries > 0) total += e.score_sq / static_cast<double>(e.score_entries);
        if (e.tokens > 0)
            total += (e.output_sq + e.mlp_sq) / static_cast<double>(e.tokens);
    }
    return total;
}

std::uint64_t attention_mlp_params(const Model& m) {
    std::uint64_t total = 0;
    for (const auto& w : m.layers) {
        for (const auto& mat : w.wq) total += mat.size();
        for (const auto& mat : w.wk) total += mat.size();
        for (const auto& mat : w.wv) total += mat.size();
        for (const auto& mat : w.wo) total += mat.size();
        total += w.wu.size() + w.wg.size() + w.wd.size();
    }
    return total;
}

std::uint64_t flops_per_token(const Model& m, std::size_t context_tokens) {
    const ModelConfig& cfg = m.config;
    std::uint64_t total = 0;
    const std::uint64_t ctx = context_tokens;
    for (const auto& w : m.layers) {
        for (std::size_t i = 0; i < cfg.h_q; ++i) {
            total += 2ull * w.wq[i].size();                          // q projection
            total += 2ull * w.wq[i].cols() * ctx;                    // score gemm
            total += 2ull * w.wv[w.value_head(cfg, i)].cols() * ctx; // value mix
            total += 2ull * w.wo[i].size();                          // output projection
        }
        for (const auto& mat : w.wk) total += 2ull * mat.size();
        for (const auto& mat : w.wv) total += 2ull * mat.size();
        total += 2ull * (w.wu.size() + w.wg.size() + w.wd.size());
    }
    return total;
}

std::uint64_t kv_bytes_per_token(const Model& m, std::size_t element_size) {
    std::uint64_t total = 0;
    for (const auto& w : m.layers)
        total += static_cast<std::uint64_t>(element_size) * kv_cache_elements_per_token(w, m.config);
    return total;
}

Accounting accounting(const Model& original, const Model& compressed,
                      std::size_t context_tokens, std::size_t element_size) {
    Accounting acct;
    acct.context_tokens = context_tokens;
    acct.element_size = element_size;
    acct.params_before = attention_mlp_params(original);
    acct.params_after = attention_mlp_params(compressed);
    acct.flops_before = flops_per_token(original, context_tokens);
    acct.flops_after = flops_per_token(compressed, context_tokens);
    acct.kv_bytes_before = kv_bytes_per_token(original, element_size);
    acct.kv_bytes_after = kv_bytes_per_token(compressed, element_size);
    return acct;
}

LayerRanks ratio_to_ranks(const ModelConfig& cfg, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw ArgumentError("ratio_to_ranks: ratio must be in [0, 1)");
    const double keep = 1.0 - ratio;
    LayerRanks ranks;
    if (cfg.rope) {
        ranks.r_qk = 2ull * static_cast<std::size_t>(
                                std::llround(keep * static_cast<double>(cfg.d_qk) / 2.0));
    } else {
        ranks.r_qk = static_cast<std::size_t>(std::llround(keep * static_cast<double>(cfg.d_qk)));
    }
    ranks.r_vo = static_cast<std::size_t>(std::llround(keep * static_cast<double>(cfg.d_vo)));
    ranks.r_mlp =
        static_cast<std::size_t>(std::llround(keep * static_cast<double>(cfg.d_inter)));
    const std::size_t min_qk = cfg.rope ? 2 : 1;
    if (ranks.r_qk < min_qk || ranks.r_vo < 1 || ranks.r_mlp < 1)
        throw ArgumentError("ratio_to_ranks: ratio " + std::to_string(ratio) +
                            " reduces a component to rank 0");
    ranks.r_qk = std::min(ranks.r_qk, cfg.d_qk);
    ranks.r_vo = std::min(ranks.r_vo, cfg.d_vo);
    ranks.r_mlp = std::min(ranks.r_mlp, cfg.d_inter);
    return ranks;
}

std::uint64_t params_for_ranks(const ModelConfig& cfg, const LayerRanks& ranks) {
    const std::uint64_t qk = static_cast<std::uint64_t>(ranks.r_qk) * cfg.d_m * (cfg.h_q + cfg.h_kv);
    const std::uint64_t vo = static_cast<std::uint64_t>(ranks.r_vo) * cfg.d_m * (cfg.h_q + cfg.h_kv);
    const std::uint64_t mats = cfg.mlp == MlpVariant::gated_silu ? 3 : 2;
    const std::uint64_t mlp = static_cast<std::uint64_t>(ranks.r_mlp) * cfg.d_m * mats;
    return qk + vo + mlp;
}

namespace {

enum Component { kQk = 0, kVo = 1, kMlp = 2 };

/// objective value by rank for one layer component; index is the rank
struct RankCurve {
    std::vector<double> obj;
};

std::vector<double> tail_sums(const std::vector<double>& sigma, std::size_t max_rank) {
    // tail[r] = sum of squared spectrum beyond rank r
    std::vector<double> tail(max_rank + 1, 0.0);
    for (std::size_t r = 0; r <= max_rank; ++r) {
        double s = 0.0;
        for (std::size_t i = r; i < sigma.size(); ++i) s += sigma[i] * sigma[i];
        tail[r] = s;
    }
    return tail;
}

RankCurve qk_curve(const LayerWeights& w, const ModelConfig& cfg, const LayerStats& stats,
                   double damping) {
    RankCurve curve;
    const std::size_t full = std::min(cfg.d_qk, cfg.d_m);
    curve.obj.assign(full + 1, 0.0);
    const std::size_t g = cfg.group_size();
    if (!cfg.rope) {
        const Matrix s_q = psd_sqrt(stats.r_qq, damping);
        const Matrix s_kv = psd_sqrt(stats.r_kv, damping);
        for (std::size_t j = 0; j < cfg.h_kv; ++j) {
            std::vector<Matrix> blocks(g);
            const Matrix wk_t = transpose(w.wk[j]);
            for (std::size_t i = 0; i < g; ++i)
                blocks[i] =
                    multiply(multiply(s_q, multiply(w.wq[j * g + i], wk_t)), s_kv);
            const auto tails = tail_sums(svd(vstack(blocks)).sigma, full);
            for (std::size_t r = 0; r <= full; ++r) curve.obj[r] += tails[r];
        }
    } else {
        for (std::size_t j = 0; j < cfg.h_kv; ++j) {
            std::vector<Matrix> group(w.wq.begin() + j * g, w.wq.begin() + (j + 1) * g);
            for (std::size_t r = 2; r <= full; r += 2) {
                curve.obj[r] +=
                    solve_qk_rope_gqa(group, w.wk[j], stats.r_qq, stats.r_kv, r, damping)
                        .objective_value;
            }
        }
    }
    return curve;
}

RankCurve ov_curve(const LayerWeights& w, const ModelConfig& cfg, const LayerStats& stats,
                   double damping) {
    RankCurve curve;
    const std::size_t full = std::min(cfg.d_vo, cfg.d_m);
    curve.obj.assign(full + 1, 0.0);
    const std::size_t g = cfg.group_size();
    if (g == 1) {
        for (std::size_t i = 0; i < cfg.h_q; ++i) {
            const Matrix s = psd_sqrt(stats.r_p[i], damping);
            const Matrix whitened = multiply(s, multiply(w.wv[i], w.wo[i]));
            const auto tails = tail_sums(svd(whitened).sigma, full);
            for (std::size_t r = 0; r <= full; ++r) curve.obj[r] += tails[r];
        }
    } else {
        const Matrix s = psd_sqrt(stats.r_kv, damping);
        for (std::size_t j = 0; j < cfg.h_kv; ++j) {
            std::vector<Matrix> blocks(g);
            for (std::size_t i = 0; i < g; ++i)
                blocks[i] = multiply(s, multiply(w.wv[j], w.wo[j * g + i]));
            const auto tails = tail_sums(svd(hstack(blocks)).sigma, full);
            for (std::size_t r = 0; r <= full; ++r) curve.obj[r] += tails[r];
        }
    }
    return curve;
}

RankCurve mlp_curve(const LayerWeights& w, const LayerStats& stats, double damping) {
    RankCurve curve;
    const std::size_t full = w.wd.rows();
    curve.obj.assign(full + 1, 0.0);
    for (std::size_t r = 1; r <= full; ++r)
        curve.obj[r] =
            mlp_cur_select(stats.r_d, w.wd, r, CurScaleMode::none, damping).objective_value;
    curve.obj[0] = std::numeric_limits<double>::infinity(); // rank 0 is not a move
    return curve;
}

} // namespace

std::vector<LayerRanks> mixed_rank_allocate(const Model& m, const std::vector<LayerStats>& stats,
                                            std::uint64_t budget_params, std::size_t rank_step,
                                            double damping) {
    if (m.layers.size() != stats.size())
        throw ArgumentError("mixed_rank_allocate: stats do not cover every layer");
    if (rank_step == 0) throw ArgumentError("mixed_rank_allocate: zero rank step");
    const ModelConfig& cfg = m.config;
    const std::size_t n_layers = m.layers.size();

    std::vector<std::array<RankCurve, 3>> curves(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        curves[l][kQk] = qk_curve(m.layers[l], cfg, stats[l], damping);
        curves[l][kVo] = ov_curve(m.layers[l], cfg, stats[l], damping);
        curves[l][kMlp] = mlp_curve(m.layers[l], stats[l], damping);
    }

    std::vector<LayerRanks> ranks(n_layers);
    std::uint64_t params = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        ranks[l] = {std::min(cfg.d_qk, cfg.d_m), std::min(cfg.d_vo, cfg.d_m), cfg.d_inter};
        params += params_for_ranks(cfg, ranks[l]);
    }

    const std::size_t qk_step =
        cfg.rope ? rank_step + (rank_step % 2) : rank_step; // rotary ranks stay even
    const std::uint64_t unit_qk = static_cast<std::uint64_t>(cfg.d_m) * (cfg.h_q + cfg.h_kv);
    const std::uint64_t unit_vo = unit_qk;
    const std::uint64_t unit_mlp =
        static_cast<std::uint64_t>(cfg.d_m) * (cfg.mlp == MlpVariant::gated_silu ? 3 : 2);

    while (params > budget_params) {
        double best_ratio = std::numeric_limits<double>::infinity();
        std::size_t best_layer = 0;
        int best_comp = -1;
        std::size_t best_next = 0;
        std::uint64_t best_saved = 0;

        for (std::size_t l = 0; l < n_layers; ++l) {
            const std::size_t cur[3] = {ranks[l].r_qk, ranks[l].r_vo, ranks[l].r_mlp};
            const std::size_t step[3] = {qk_step, rank_step, rank_step};
            const std::size_t floor_rank[3] = {cfg.rope ? 2ull : 1ull, 1, 1};
            const std::uint64_t unit[3] = {unit_qk, unit_vo, unit_mlp};
            for (int c = 0; c < 3; ++c) {
                if (cur[c] <= floor_rank[c]) continue;
                const std::size_t next =
                    cur[c] > floor_rank[c] + step[c] ? cur[c] - step[c] : floor_rank[c];
                const double delta_obj = curves[l][c].obj[next] - curves[l][c].obj[cur[c]];
                const std::uint64_t saved = unit[c] * (cur[c] - next);
                const double ratio = delta_obj / static_cast<double>(saved);
                if (ratio < best_ratio) {
                    best_ratio = ratio;
                    best_layer = l;
                    best_comp = c;
                    best_next = next;
                    best_saved = saved;
                }
            }
        }
        if (best_comp < 0)
            throw ArgumentError("mixed_rank_allocate: budget " + std::to_string(budget_params) +
                                " infeasible at minimum ranks");
        if (best_comp == kQk) ranks[best_layer].r_qk = best_next;
        if (best_comp == kVo) ranks[best_layer].r_vo = best_next;
        if (best_comp == kMlp) ranks[best_layer].r_mlp = best_next;
        params -= best_saved;
    }
    return ranks;
}

double oracle_random_rank_r(const std::function<double(const Matrix&)>& objective,
                            std::size_t rows, std::size_t cols, std::size_t r,
                            std::size_t n_samples, std::uint64_t seed,
                            const std::vector<LinearMap>& maps,
                            const std::vector<Matrix>& extra_candidates) {
    if (r == 0) throw ArgumentError("oracle_random_rank_r: zero rank");
    Rng rng(mix_seed(seed, 11));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_samples; ++k) {
        const Matrix a = rng.gaussian_matrix(rows, r);
        const Matrix b = rng.gaussian_matrix(r, cols);
        const Matrix w = multiply(a, b);
        if (maps.empty()) {
            best = std::min(best, objective(w));
        } else {
            for (const auto& map : maps)
                best = std::min(best, objective(multiply(multiply(map.left, w), map.right)));
        }
    }
    for (const auto& cand : extra_candidates) best = std::min(best, objective(cand));
    return best;
}

namespace {

std::uint64_t binomial_guarded(std::size_t n, std::size_t k, std::size_t cap) {
    std::uint64_t c = 1;
    if (k > n) return 0;
    k = std::min(k, n - k);
    for (std::size_t i = 0; i < k; ++i) {
        c = c * (n - i) / (i + 1);
        if (c > cap) return c;
    }
    return c;
}

} // namespace

CurOracleResult oracle_exhaustive_cur(const Matrix& l, const Matrix& r, std::size_t k,
                                      bool paired, std::size_t max_combinations) {
    const std::size_t n = l.cols();
    if (paired && (n % 2 != 0 || k % 2 != 0))
        throw ArgumentError("oracle_exhaustive_cur: paired mode needs even width and even k");
    if (k < 1 || k > n) throw ArgumentError("oracle_exhaustive_cur: k out of range");
    const std::size_t slots = paired ? n / 2 : n;
    const std::size_t pick = paired ? k / 2 : k;
    const std::uint64_t combos = binomial_guarded(slots, pick, max_combinations);
    if (combos > max_combinations)
        throw ArgumentError("oracle_exhaustive_cur: " + std::to_string(combos) +
                            " combinations exceed the guard of " +
                            std::to_string(max_combinations));

    std::vector<std::size_t> comb(pick);
    for (std::size_t i = 0; i < pick; ++i) comb[i] = i;

    CurOracleResult best;
    best.objective = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> selected;
    while (true) {
        selected.clear();
        for (std::size_t i : comb) {
            if (paired) {
                selected.push_back(2 * i);
                selected.push_back(2 * i + 1);
            } else {
                selected.push_back(i);
            }
        }
        const double obj = selection_objective(l, r, selected);
        if (obj < best.objective) {
            best.objective = obj;
            best.indices = selected;
        }
        // next lexicographic combination
        std::size_t i = pick;
        while (i > 0 && comb[i - 1] == slots - pick + i - 1) --i;
        if (i == 0) break;
        ++comb[i - 1];
        for (std::size_t j = i; j < pick; ++j) comb[j] = comb[j - 1] + 1;
    }
    return best;
}

std::vector<double> random_subset_objectives(const Matrix& l, const Matrix& r, std::size_t k,
                                             bool paired, std::size_t n, std::uint64_t seed) {
    const std::size_t width = l.cols();
    if (paired && (width % 2 != 0 || k % 2 != 0))
        throw ArgumentError("random_subset_objectives: paired mode needs even width and even k");
    const std::size_t slots = paired ? width / 2 : width;
    const std::size_t pick = paired ? k / 2 : k;
    if (pick < 1 || pick > slots) throw ArgumentError("random_subset_objectives: k out of range");

    Rng rng(mix_seed(seed, 13));
    std::vector<double> out;
    out.reserve(n);
    std::vector<std::size_t> pool(slots);
    for (std::size_t draw = 0; draw < n; ++draw) {
        for (std::size_t i = 0; i < slots; ++i) pool[i] = i;
        // partial Fisher-Yates
        for (std::size_t i = 0; i < pick; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(slots - i));
            std::swap(pool[i], pool[std::min(j, slots - 1)]);
        }
        std::vector<std::size_t> selected;
        for (std::size_t i = 0; i < pick; ++i) {
            if (paired) {
                selected.push_back(2 * pool[i]);
                selected.push_back(2 * pool[i] + 1);
            } else {
                selected.push_back(pool[i]);
            }
        }
        std::sort(selected.begin(), selected.end());
        out.push_back(selection_objective(l, r, selected));
    }
    return out;
}

} // namespace lrc
