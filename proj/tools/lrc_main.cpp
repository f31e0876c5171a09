// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lrc/errors.hpp"
#include "lrc/pipeline.hpp"
#include "lrc/run_config.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw lrc::IoError("cannot open '" + path + "' for writing");
    out << text;
    out.close();
    if (!out) throw lrc::IoError("write to '" + path + "' failed");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-rank compression workbench for toy transformer layers"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "json run configuration file");

    // flag overrides beat the config file, which beats the defaults
    std::uint64_t seed = 0;
    double ratio = 0.0, damping = 0.0;
    std::size_t r_qk = 0, r_vo = 0, r_mlp = 0;
    std::string qk_method, ov_method, mlp_method, scale_mode;
    auto* seed_opt = app.add_option("--seed", seed, "master seed");
    auto* ratio_opt = app.add_option("--ratio", ratio, "fraction of attention+mlp params removed");
    auto* damping_opt = app.add_option("--damping", damping, "statistic damping epsilon");
    auto* rqk_opt = app.add_option("--r-qk", r_qk, "explicit score rank");
    auto* rvo_opt = app.add_option("--r-vo", r_vo, "explicit value/output rank");
    auto* rmlp_opt = app.add_option("--r-mlp", r_mlp, "explicit intermediate rank");
    auto* qkm_opt = app.add_option("--qk-method", qk_method, "whitened|clover|abs_w|wanda");
    auto* ovm_opt = app.add_option("--ov-method", ov_method, "whitened|plain|overall");
    auto* mlpm_opt = app.add_option("--mlp-method", mlp_method, "whitened|abs_w|wanda");
    auto* scale_opt = app.add_option("--scale-mode", scale_mode, "none|monte_carlo");

    std::string model_path, stats_path, compressed_path, out_path, plan_path, component;
    std::uint64_t budget = 0;
    std::size_t rank_step = 0;

    CLI::App* generate = app.add_subcommand("generate", "write a seeded random model store");
    generate->add_option("--out", out_path, "model store manifest path")->required();

    CLI::App* calibrate = app.add_subcommand("calibrate", "collect per-layer statistics");
    calibrate->add_option("--model", model_path, "model store")->required();
    calibrate->add_option("--out", out_path, "statistics store manifest path")->required();

    CLI::App* compress = app.add_subcommand("compress", "factor a model at the configured ranks");
    compress->add_option("--model", model_path, "model store")->required();
    compress->add_option("--stats", stats_path, "statistics store")->required();
    compress->add_option("--out", out_path, "compressed model store path")->required();
    compress->add_option("--plan", plan_path, "plan report path (default stdout)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "measure functional errors and accounting");
    evaluate->add_option("--model", model_path, "original model store")->required();
    evaluate->add_option("--compressed", compressed_path, "compressed model store")->required();
    evaluate->add_option("--out", out_path, "report path (default stdout)");

    CLI::App* sweep = app.add_subcommand("sweep", "rank sweep of one component, csv output");
    sweep->add_option("--model", model_path, "model store")->required();
    sweep->add_option("--stats", stats_path, "statistics store")->required();
    sweep->add_option("--component", component, "qk|ov|mlp")->required();
    sweep->add_option("--out", out_path, "csv path (default stdout)");

    CLI::App* allocate = app.add_subcommand("allocate", "greedy mixed-rank plan under a budget");
    allocate->add_option("--model", model_path, "model store")->required();
    allocate->add_option("--stats", stats_path, "statistics store")->required();
    auto* budget_opt = allocate->add_option("--budget", budget, "attention+mlp parameter budget");
    auto* step_opt = allocate->add_option("--rank-step", rank_step, "allocation granularity");
    allocate->add_option("--out", out_path, "compressed model store path")->required();
    allocate->add_option("--plan", plan_path, "plan report path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }

    try {
        lrc::RunConfig cfg =
            config_path.empty() ? lrc::RunConfig() : lrc::RunConfig::load(config_path);
        if (seed_opt->count()) cfg.seed = seed;
        if (ratio_opt->count()) cfg.compression.ratio = ratio;
        if (damping_opt->count()) cfg.compression.damping = damping;
        if (rqk_opt->count()) cfg.compression.r_qk = r_qk;
        if (rvo_opt->count()) cfg.compression.r_vo = r_vo;
        if (rmlp_opt->count()) cfg.compression.r_mlp = r_mlp;
        if (qkm_opt->count()) cfg.compression.qk_method = lrc::qk_method_from_name(qk_method);
        if (ovm_opt->count()) cfg.compression.ov_method = lrc::ov_method_from_name(ov_method);
        if (mlpm_opt->count()) cfg.compression.mlp_method = lrc::mlp_method_from_name(mlp_method);
        if (scale_opt->count()) cfg.compression.scale_mode = lrc::scale_mode_from_name(scale_mode);
        if (budget_opt->count()) cfg.compression.budget_params = budget;
        if (step_opt->count()) cfg.compression.rank_step = rank_step;

        if (generate->parsed()) {
            const lrc::Model m = lrc::generate_model(cfg);
            lrc::save_model(m, out_path, cfg.weights_dtype);
        } else if (calibrate->parsed()) {
            const lrc::Model m = lrc::load_model(model_path);
            lrc::save_stats(lrc::calibrate_model(m, cfg), out_path);
        } else if (compress->parsed()) {
            const lrc::Model m = lrc::load_model(model_path);
            const auto stats = lrc::load_stats(stats_path);
            const lrc::CompressionResult result = lrc::compress_model(m, stats, cfg);
            lrc::save_model(result.compressed, out_path, cfg.weights_dtype);
            write_text(plan_path, lrc::format_plan(cfg, result));
        } else if (evaluate->parsed()) {
            const lrc::Model original = lrc::load_model(model_path);
            const lrc::Model compressed = lrc::load_model(compressed_path);
            const lrc::ErrorReport report = lrc::evaluate_models(original, compressed, cfg);
            write_text(out_path, lrc::format_report(cfg, original, compressed, report));
        } else if (sweep->parsed()) {
            const lrc::Model m = lrc::load_model(model_path);
            const auto stats = lrc::load_stats(stats_path);
            write_text(out_path, lrc::sweep_component(m, stats, cfg, component));
        } else if (allocate->parsed()) {
            const lrc::Model m = lrc::load_model(model_path);
            const auto stats = lrc::load_stats(stats_path);
            if (cfg.compression.budget_params == 0)
                throw lrc::ArgumentError("allocate needs a positive --budget");
            const auto ranks =
                lrc::mixed_rank_allocate(m, stats, cfg.compression.budget_params,
                                         cfg.compression.rank_step, cfg.compression.damping);
            const lrc::CompressionResult result =
                lrc::compress_model_with_ranks(m, stats, cfg, ranks);
            lrc::save_model(result.compressed, out_path, cfg.weights_dtype);
            write_text(plan_path, lrc::format_plan(cfg, result));
        }
    } catch (const lrc::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const lrc::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const lrc::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return 0;
}
