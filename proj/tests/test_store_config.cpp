// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "doctest.h"
#include "lrc/errors.hpp"
#include "lrc/pipeline.hpp"
#include "lrc/rng.hpp"
#include "lrc/run_config.hpp"
#include "lrc/tensor_store.hpp"
#include "test_util.hpp"

using namespace lrc;
using nlohmann::json;

namespace {

std::string fresh_dir(const std::string& leaf) {
    const std::string dir = (std::filesystem::temp_directory_path() / leaf).string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    json j;
    in >> j;
    return j;
}

void dump_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << '\n';
}

bool same_weights(const LayerWeights& a, const LayerWeights& b) {
    return a.wq == b.wq && a.wk == b.wk && a.wv == b.wv && a.wo == b.wo && a.wu == b.wu &&
           a.wg == b.wg && a.wd == b.wd && a.qk_freq_indices == b.qk_freq_indices &&
           a.per_query_value == b.per_query_value;
}

bool same_config(const ModelConfig& a, const ModelConfig& b) {
    return a.d_m == b.d_m && a.h_q == b.h_q && a.h_kv == b.h_kv && a.d_qk == b.d_qk &&
           a.d_vo == b.d_vo && a.d_inter == b.d_inter && a.rope == b.rope &&
           a.rope_theta == b.rope_theta && a.mlp == b.mlp && a.softmax_scale == b.softmax_scale;
}

RunConfig tiny_run() {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.layers = 2;
    cfg.model.d_m = 12;
    cfg.model.h_q = 4;
    cfg.model.h_kv = 2;
    cfg.model.d_qk = 4;
    cfg.model.d_vo = 4;
    cfg.model.d_inter = 16;
    cfg.model.rope = true;
    cfg.model.mlp = MlpVariant::gated_silu;
    cfg.calibration.batches = 2;
    cfg.calibration.tokens_per_batch = 32;
    return cfg;
}

} // namespace

TEST_CASE("tensor store round-trips values, order, and dtypes") {
    const std::string dir = fresh_dir("lrc_store_rt");
    Rng rng(21);
    const Matrix wide = rng.gaussian_matrix(3, 5);
    const Matrix tall = rng.gaussian_matrix(6, 2);

    TensorStoreWriter writer;
    writer.add("b_wide", wide);
    writer.add("a_tall", tall, Dtype::f32);
    writer.add_scalar("count", 42.0);
    writer.write(dir + "/store.json");

    const TensorStore store = TensorStore::load(dir + "/store.json");
    CHECK(store.names() == std::vector<std::string>{"b_wide", "a_tall", "count"});
    CHECK(store.contains("b_wide"));
    CHECK(!store.contains("missing"));
    CHECK(store.matrix("b_wide") == wide);
    CHECK(store.scalar("count") == 42.0);
    CHECK(store.dtype("b_wide") == Dtype::f64);
    CHECK(store.dtype("a_tall") == Dtype::f32);

    // f32 entries hold the float rounding of the source values exactly
    const Matrix& widened = store.matrix("a_tall");
    REQUIRE(widened.rows() == 6);
    for (std::size_t i = 0; i < tall.rows(); ++i)
        for (std::size_t j = 0; j < tall.cols(); ++j)
            CHECK(widened(i, j) == static_cast<double>(static_cast<float>(tall(i, j))));

    CHECK_THROWS_AS(store.matrix("missing"), IoError);
    CHECK_THROWS_AS(store.dtype("missing"), IoError);
    CHECK_THROWS_AS(store.scalar("b_wide"), IoError);
    CHECK_THROWS_AS(TensorStore::load(dir + "/absent.json"), IoError);

    TensorStoreWriter dup;
    dup.add("x", wide);
    CHECK_THROWS_AS(dup.add("x", tall), IoError);
    CHECK_THROWS_AS(dup.add("", tall), IoError);
}

TEST_CASE("tensor store rejects tampered manifests") {
    const std::string dir = fresh_dir("lrc_store_bad");
    Rng rng(22);
    TensorStoreWriter writer;
    writer.add("a", rng.gaussian_matrix(2, 2));
    writer.add("b", rng.gaussian_matrix(2, 2));
    writer.write(dir + "/store.json");

    {
        std::ofstream out(dir + "/garbage.json");
        out << "not json at all\n";
    }
    CHECK_THROWS_AS(TensorStore::load(dir + "/garbage.json"), IoError);

    json j = load_json(dir + "/store.json");
    j["format"] = "something-else";
    dump_json(j, dir + "/bad_format.json");
    CHECK_THROWS_AS(TensorStore::load(dir + "/bad_format.json"), IoError);

    j = load_json(dir + "/store.json");
    j["version"] = 99;
    dump_json(j, dir + "/bad_version.json");
    CHECK_THROWS_AS(TensorStore::load(dir + "/bad_version.json"), IoError);

    // length that disagrees with the declared shape
    j = load_json(dir + "/store.json");
    j["blob"] = "store.bin";
    j["entries"][0]["byte_length"] = 24;
    dump_json(j, dir + "/bad_length.json");
    CHECK_THROWS_AS(TensorStore::load(dir + "/bad_length.json"), IoError);

    // entry reaching past the end of the blob
    j = load_json(dir + "/store.json");
    j["blob"] = "store.bin";
    j["entries"][1]["byte_offset"] = 1u << 20;
    dump_json(j, dir + "/past_end.json");
    CHECK_THROWS_AS(TensorStore::load(dir + "/past_end.json"), IoError);

    // overlapping spans
    j = load_json(dir + "/store.json");
    j["blob"] = "store.bin";
    j["entries"][1]["byte_offset"] = 8;
    dump_json(j, dir + "/overlap.json");
    CHECK_THROWS_AS(TensorStore::load(dir + "/overlap.json"), IoError);

    // duplicate names
    j = load_json(dir + "/store.json");
    j["blob"] = "store.bin";
    j["entries"][1]["name"] = "a";
    dump_json(j, dir + "/dup.json");
    CHECK_THROWS_AS(TensorStore::load(dir + "/dup.json"), IoError);

    // non 2-d shape
    j = load_json(dir + "/store.json");
    j["blob"] = "store.bin";
    j["entries"][0]["shape"] = {2, 2, 1};
    dump_json(j, dir + "/bad_shape.json");
    CHECK_THROWS_AS(TensorStore::load(dir + "/bad_shape.json"), IoError);
}

TEST_CASE("run config parses defaults and round-trips through json") {
    const RunConfig defaults = RunConfig::from_json(json::object());
    CHECK(defaults.seed == 1);
    CHECK(defaults.model.d_m == 32);
    CHECK(defaults.model.rope);
    CHECK(defaults.layers == 1);
    CHECK(defaults.compression.ratio == 0.2);
    CHECK(defaults.weights_dtype == Dtype::f64);

    RunConfig cfg = tiny_run();
    cfg.compression.qk_method = QkMethod::clover;
    cfg.compression.ov_method = OvMethod::overall;
    cfg.compression.mlp_method = MlpMethod::wanda;
    cfg.compression.scale_mode = CurScaleMode::monte_carlo;
    cfg.weights_dtype = Dtype::f32;
    const RunConfig back = RunConfig::from_json(cfg.to_json());
    CHECK(same_config(back.model, cfg.model));
    CHECK(back.seed == cfg.seed);
    CHECK(back.layers == cfg.layers);
    CHECK(back.compression.qk_method == QkMethod::clover);
    CHECK(back.compression.ov_method == OvMethod::overall);
    CHECK(back.compression.mlp_method == MlpMethod::wanda);
    CHECK(back.compression.scale_mode == CurScaleMode::monte_carlo);
    CHECK(back.weights_dtype == Dtype::f32);
    CHECK(back.calibration.batches == 2);
    CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("run config rejects unknown keys and bad values") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"bogus", 1}}),
                         "unknown config key 'bogus'", ArgumentError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"model", {{"bogus", 1}}}}),
                         "unknown config key 'model.bogus'", ArgumentError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"seed", "twelve"}}),
                         "config key 'seed' has the wrong type", ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"model", {{"mlp", "cubic"}}}}), ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"compression", {{"qk_method", "magic"}}}}),
                    ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"weights_dtype", "f16"}}), ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"calibration", {{"batches", 0}}}}), ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"calibration", {{"covariance_decay", 0.5}}}}),
                    ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"model", {{"layers", 0}}}}), ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"evaluation", {{"element_size", 0}}}}),
                    ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json({{"compression", {{"damping", -1.0}}}}), ArgumentError);
    // geometry goes through the same validation as the model itself
    CHECK_THROWS_AS(RunConfig::from_json({{"model", {{"h_q", 3}}}}), ArgumentError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"compression", {{"r_qk", 4}}}}),
                         "explicit ranks need all of r_qk, r_vo, r_mlp", ArgumentError);

    const std::string dir = fresh_dir("lrc_config_bad");
    {
        std::ofstream out(dir + "/broken.json");
        out << "{ not json";
    }
    CHECK_THROWS_AS(RunConfig::load(dir + "/broken.json"), ArgumentError);
    CHECK_THROWS_AS(RunConfig::load(dir + "/absent.json"), IoError);
}

TEST_CASE("rank resolution prefers explicit ranks and validates them") {
    RunConfig cfg;
    const LayerRanks uniform = cfg.resolve_ranks();
    CHECK(uniform.r_qk == 6);
    CHECK(uniform.r_vo == 6);
    CHECK(uniform.r_mlp == 51);

    cfg.compression.r_qk = 4;
    cfg.compression.r_vo = 5;
    cfg.compression.r_mlp = 32;
    const LayerRanks explicit_ranks = cfg.resolve_ranks();
    CHECK(explicit_ranks.r_qk == 4);
    CHECK(explicit_ranks.r_vo == 5);
    CHECK(explicit_ranks.r_mlp == 32);

    cfg.compression.r_qk = 3;
    CHECK_THROWS_WITH_AS(cfg.resolve_ranks(), "rotary score rank must be even", ArgumentError);
    cfg.compression.r_qk = 10;
    CHECK_THROWS_AS(cfg.resolve_ranks(), ArgumentError);
}

TEST_CASE("enum names map back to themselves") {
    for (const auto m : {QkMethod::whitened, QkMethod::clover, QkMethod::abs_w, QkMethod::wanda})
        CHECK(qk_method_from_name(qk_method_name(m)) == m);
    for (const auto m : {OvMethod::whitened, OvMethod::plain, OvMethod::overall})
        CHECK(ov_method_from_name(ov_method_name(m)) == m);
    for (const auto m : {MlpMethod::whitened, MlpMethod::abs_w, MlpMethod::wanda})
        CHECK(mlp_method_from_name(mlp_method_name(m)) == m);
    for (const auto m : {CurScaleMode::none, CurScaleMode::monte_carlo})
        CHECK(scale_mode_from_name(scale_mode_name(m)) == m);
    for (const auto v : {MlpVariant::two_layer_relu, MlpVariant::gated_silu})
        CHECK(mlp_variant_from_name(mlp_variant_name(v)) == v);
    CHECK(dtype_from_name(dtype_name(Dtype::f32)) == Dtype::f32);
    CHECK(dtype_from_name(dtype_name(Dtype::f64)) == Dtype::f64);
}

TEST_CASE("models survive a save and load byte-for-byte") {
    const std::string dir = fresh_dir("lrc_model_rt");
    const RunConfig cfg = tiny_run();
    const Model m = generate_model(cfg);

    save_model(m, dir + "/model.json");
    const Model back = load_model(dir + "/model.json");
    CHECK(same_config(back.config, m.config));
    REQUIRE(back.layers.size() == m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l)
        CHECK(same_weights(back.layers[l], m.layers[l]));

    // compressed rotary models carry retained frequency indices with them
    RunConfig reduced_cfg = cfg;
    reduced_cfg.compression.r_qk = 2;
    reduced_cfg.compression.r_vo = 2;
    reduced_cfg.compression.r_mlp = 8;
    const auto stats = calibrate_model(m, cfg);
    const auto result = compress_model(m, stats, reduced_cfg);
    save_model(result.compressed, dir + "/reduced.json");
    const Model reduced = load_model(dir + "/reduced.json");
    REQUIRE(!result.compressed.layers[0].qk_freq_indices.empty());
    for (std::size_t l = 0; l < reduced.layers.size(); ++l)
        CHECK(same_weights(reduced.layers[l], result.compressed.layers[l]));

    // the shared-output variant marks its per-query value layout
    RunConfig overall_cfg = reduced_cfg;
    overall_cfg.compression.ov_method = OvMethod::overall;
    const auto overall_stats = calibrate_model(m, overall_cfg);
    const auto overall = compress_model(m, overall_stats, overall_cfg);
    REQUIRE(overall.compressed.layers[0].per_query_value);
    save_model(overall.compressed, dir + "/overall.json");
    const Model overall_back = load_model(dir + "/overall.json");
    for (std::size_t l = 0; l < overall_back.layers.size(); ++l)
        CHECK(same_weights(overall_back.layers[l], overall.compressed.layers[l]));

    // narrow storage rounds every weight to float
    save_model(m, dir + "/narrow.json", Dtype::f32);
    const Model narrow = load_model(dir + "/narrow.json");
    const Matrix& w = narrow.layers[0].wu;
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j)
            CHECK(w(i, j) == static_cast<double>(static_cast<float>(m.layers[0].wu(i, j))));

    CHECK_THROWS_AS(load_model(dir + "/absent.json"), IoError);
}

TEST_CASE("statistics survive a save and load byte-for-byte") {
    const std::string dir = fresh_dir("lrc_stats_rt");
    const RunConfig cfg = tiny_run();
    const Model m = generate_model(cfg);
    const auto stats = calibrate_model(m, cfg);
    REQUIRE(stats.size() == 2);
    REQUIRE(stats[0].r_p_cat.rows() == 0);

    save_stats(stats, dir + "/stats.json");
    const auto back = load_stats(dir + "/stats.json");
    REQUIRE(back.size() == stats.size());
    for (std::size_t l = 0; l < stats.size(); ++l) {
        CHECK(back[l].r_qq == stats[l].r_qq);
        CHECK(back[l].r_kv == stats[l].r_kv);
        CHECK(back[l].r_d == stats[l].r_d);
        CHECK(back[l].sample_count == stats[l].sample_count);
        CHECK(back[l].r_p == stats[l].r_p);
        CHECK(back[l].r_p_cat == stats[l].r_p_cat);
    }

    CHECK_THROWS_AS(load_stats(dir + "/absent.json"), IoError);

    // a model manifest is not a statistics manifest
    save_model(m, dir + "/model.json");
    CHECK_THROWS_AS(load_stats(dir + "/model.json"), IoError);
}
