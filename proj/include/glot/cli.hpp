#pragma once

// Command-line front end: data generation, training, evaluation, inference,
// gradient checks, ablation sweeps, attention dumps and parameter counting.
// Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "glot/config.hpp"
#include "glot/train.hpp"
#include "glot/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace glot {

namespace cli_detail {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

inline void add_common(CLI::App* cmd, CommonOpts& opts, bool need_out = true) {
    cmd->add_option("--config", opts.config_path, "config file (key=value or JSON)");
    cmd->add_option("--set", opts.overrides, "override as key=value (repeatable)");
    auto* seed_opt = cmd->add_option_function<std::uint64_t>(
        "--seed", [&opts](std::uint64_t s) { opts.seed = s; }, "seed override");
    (void)seed_opt;
    auto* out = cmd->add_option("--out", opts.out_dir, "output directory");
    if (need_out) out->required();
}

inline ConfigMap resolve_config(const CommonOpts& opts) {
    ConfigMap cfg;
    if (!opts.config_path.empty()) cfg.overlay(ConfigMap::parse_file(opts.config_path));
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
    return cfg;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

// Adopt window length and feature width from the dataset when the user did
// not pin them explicitly.
inline TrainConfig train_config_for_dataset(const ConfigMap& cfg, const DatasetMeta& meta) {
    TrainConfig tc = train_config_from_map(cfg);
    if (!cfg.has("model.feature_dim")) tc.model.feature_dim = meta.feature_dim;
    if (!cfg.has("model.t_len")) tc.model.t_len = meta.t_len;
    return tc;
}

inline MaskSpec mask_from_list(const std::string& csv, int t_len) {
    MaskSpec spec;
    if (csv.empty()) return spec;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        try {
            spec.masked_indices.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw UsageError("--mask expects comma-separated frame indices");
        }
    }
    std::sort(spec.masked_indices.begin(), spec.masked_indices.end());
    spec.masked_indices.erase(std::unique(spec.masked_indices.begin(), spec.masked_indices.end()),
                              spec.masked_indices.end());
    for (int t : spec.masked_indices)
        if (t < 0 || t >= t_len) throw UsageError("--mask index out of range");
    spec.ratio = static_cast<double>(spec.masked_indices.size()) / t_len;
    return spec;
}

inline nlohmann::json capture_to_json(const AttnCapture& cap) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : cap.records) {
        nlohmann::json heads = nlohmann::json::array();
        for (const auto& flat : rec.head_weights) {
            nlohmann::json mat = nlohmann::json::array();
            for (int i = 0; i < rec.n_q; ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (int j = 0; j < rec.n_k; ++j) row.push_back(flat[static_cast<std::size_t>(i) * rec.n_k + j]);
                mat.push_back(row);
            }
            heads.push_back(mat);
        }
        records.push_back({{"tag", rec.tag},
                           {"n_heads", rec.n_heads},
                           {"n_q", rec.n_q},
                           {"n_k", rec.n_k},
                           {"weights", heads}});
    }
    return {{"records", records}};
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
    using cli_detail::CommonOpts;

    CLI::App app{"global-to-local temporal pose and shape estimation"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------
    CommonOpts gen_opts;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic motion dataset");
    cli_detail::add_common(gen, gen_opts);

    // train ------------------------------------------------------------
    CommonOpts train_opts;
    std::string train_data;
    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
    cli_detail::add_common(train_cmd, train_opts);
    train_cmd->add_option("--data", train_data, "dataset directory")->required();

    // eval -------------------------------------------------------------
    CommonOpts eval_opts;
    std::string eval_ckpt, eval_data;
    double eval_fps = 0.0;
    bool eval_export = false;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    cli_detail::add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--fps", eval_fps, "report accel in mm/s^2 at this frame rate");
    eval_cmd->add_flag("--export", eval_export, "export predicted trajectories");

    // infer ------------------------------------------------------------
    CommonOpts infer_opts;
    std::string infer_ckpt, infer_seq;
    auto* infer_cmd = app.add_subcommand("infer", "run a checkpoint over one sequence file");
    cli_detail::add_common(infer_cmd, infer_opts);
    infer_cmd->add_option("--ckpt", infer_ckpt, "checkpoint file")->required();
    infer_cmd->add_option("--seq", infer_seq, "sequence record file")->required();

    // grad-check -------------------------------------------------------
    CommonOpts gc_opts;
    auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference check of the full pipeline");
    cli_detail::add_common(gc_cmd, gc_opts, /*need_out=*/false);

    // sweep --------------------------------------------------------------
    CommonOpts sweep_opts;
    std::string sweep_axis_name, sweep_values_csv, sweep_data, sweep_eval_data;
    auto* sweep_cmd = app.add_subcommand("sweep", "train/evaluate a table of configurations");
    cli_detail::add_common(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--axis", sweep_axis_name, "mask_ratio|nearby_w|mask_token|hscr_vs_residual|gmm_only")
        ->required();
    sweep_cmd->add_option("--values", sweep_values_csv, "comma-separated axis values (default: table grid)");
    sweep_cmd->add_option("--data", sweep_data, "training dataset directory")->required();
    sweep_cmd->add_option("--eval-data", sweep_eval_data, "held-out dataset (default: training data)");

    // dump-attn ----------------------------------------------------------
    CommonOpts attn_opts;
    std::string attn_ckpt, attn_data, attn_mask_csv;
    int attn_seq = 0, attn_center = -1;
    auto* attn_cmd = app.add_subcommand("dump-attn", "export attention weights for one window");
    cli_detail::add_common(attn_cmd, attn_opts);
    attn_cmd->add_option("--ckpt", attn_ckpt, "checkpoint file")->required();
    attn_cmd->add_option("--data", attn_data, "dataset directory")->required();
    attn_cmd->add_option("--sequence", attn_seq, "sequence index");
    attn_cmd->add_option("--center", attn_center, "window center frame (default: mid of sequence)");
    attn_cmd->add_option("--mask", attn_mask_csv, "masked frame indices, comma-separated");

    // param-count --------------------------------------------------------
    CommonOpts pc_opts;
    auto* pc_cmd = app.add_subcommand("param-count", "closed-form vs enumerated parameter counts");
    cli_detail::add_common(pc_cmd, pc_opts, /*need_out=*/false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, std::cout, std::cerr);
        return code == 0 ? 0 : 2;
    }

    try {
        namespace fs = std::filesystem;
        if (gen->parsed()) {
            const ConfigMap cfg = cli_detail::resolve_config(gen_opts);
            const DataGenConfig dc = data_config_from_map(cfg);
            DatasetMeta meta;
            meta.seed = dc.seed;
            meta.count = dc.count;
            meta.length = dc.length;
            meta.t_len = dc.t_len;
            meta.n_vertices = dc.n_vertices;
            meta.feature_dim = dc.feature_dim;
            meta.noise_level = dc.noise_level;
            meta.body_seed = dc.seed;
            const Dataset ds = generate_dataset(meta);
            save_dataset(gen_opts.out_dir, ds);
            ConfigMap echo;
            echo.set("seed", std::to_string(dc.seed));
            echo.set("data.count", std::to_string(dc.count));
            echo.set("data.length", std::to_string(dc.length));
            echo.set("data.t_len", std::to_string(dc.t_len));
            echo.set("data.vertices", std::to_string(dc.n_vertices));
            echo.set("data.feature_dim", std::to_string(dc.feature_dim));
            echo.set("data.noise_level", detail::format_double(dc.noise_level));
            cli_detail::write_text(fs::path(gen_opts.out_dir) / "config.echo", echo.to_text());
            std::cout << "wrote " << dc.count << " sequences to " << gen_opts.out_dir << "\n";
            return 0;
        }

        if (train_cmd->parsed()) {
            const ConfigMap cfg = cli_detail::resolve_config(train_opts);
            const Dataset ds = load_dataset(train_data);
            const TrainConfig tc = cli_detail::train_config_for_dataset(cfg, ds.meta);
            const std::string preset = cfg.get_string("preset", "desk");
            fs::create_directories(train_opts.out_dir);
            cli_detail::write_text(fs::path(train_opts.out_dir) / "config.echo",
                                   effective_config(tc, preset).to_text());
            const TrainResult result = train(tc, ds, train_opts.out_dir);
            if (!result.log.empty())
                std::printf("step %d total loss %.6f\n", tc.steps - 1, result.log.back().total);
            std::cout << "checkpoint " << result.checkpoint_path.string() << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            const ConfigMap cfg = cli_detail::resolve_config(eval_opts);
            cfg.ensure_known(known_config_keys());
            const LoadedCheckpoint ckpt = load_checkpoint(eval_ckpt);
            const Dataset ds = load_dataset(eval_data);
            std::optional<double> fps;
            if (eval_cmd->count("--fps")) fps = eval_fps;
            else if (cfg.has("eval.fps")) fps = cfg.get_double("eval.fps", 0.0);
            fs::create_directories(eval_opts.out_dir);
            const fs::path export_dir = fs::path(eval_opts.out_dir) / "preds";
            const MetricReport report =
                evaluate(ckpt.model, ckpt.body, ds, fps, eval_export ? &export_dir : nullptr);
            cli_detail::write_text(fs::path(eval_opts.out_dir) / "metrics.txt", report.to_text());
            cli_detail::write_text(fs::path(eval_opts.out_dir) / "metrics.json", report.to_json().dump(2) + "\n");
            std::cout << report.to_text();
            return 0;
        }

        if (infer_cmd->parsed()) {
            const LoadedCheckpoint ckpt = load_checkpoint(infer_ckpt);
            const MotionSequence seq = sequence_from_container(Container::read(infer_seq));
            if (seq.feature_dim != ckpt.model.config().feature_dim)
                throw ConfigMismatch("sequence feature_dim does not match the checkpoint");
            const SequencePrediction pred = predict_sequence(ckpt.model, ckpt.body, seq);
            fs::create_directories(infer_opts.out_dir);
            const fs::path out = fs::path(infer_opts.out_dir) / "prediction.bin";
            prediction_to_container(pred, seq.length, ckpt.body.n_vertices).write(out);
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }

        if (gc_cmd->parsed()) {
            const ConfigMap cfg = cli_detail::resolve_config(gc_opts);
            const std::uint64_t seed = cfg.get_u64("seed", 5);
            const PipelineGradCheck check = pipeline_grad_check(seed);
            std::printf("parameters checked      %zu\n", check.n_params);
            std::printf("max relative error      %.3e (rtol %.1e)\n", check.report.max_rel_err,
                        check.report.rtol);
            std::printf("fd-vs-analytic          %s\n", check.report.pass ? "pass" : "FAIL");
            std::printf("detach blocks lpc path  %s\n", check.detach_blocks_correction ? "pass" : "FAIL");
            std::printf("detach keeps gmm path   %s\n", check.detach_keeps_gmm_path ? "pass" : "FAIL");
            return check.pass() ? 0 : 1;
        }

        if (sweep_cmd->parsed()) {
            const ConfigMap cfg = cli_detail::resolve_config(sweep_opts);
            const SweepAxis axis = sweep_axis_from_string(sweep_axis_name);
            std::vector<std::string> values;
            if (sweep_values_csv.empty()) {
                values = default_sweep_values(axis);
            } else {
                std::istringstream in(sweep_values_csv);
                std::string tok;
                while (std::getline(in, tok, ',')) values.push_back(tok);
            }
            const Dataset train_ds = load_dataset(sweep_data);
            const Dataset eval_ds = sweep_eval_data.empty() ? load_dataset(sweep_data)
                                                            : load_dataset(sweep_eval_data);
            const TrainConfig base = cli_detail::train_config_for_dataset(cfg, train_ds.meta);
            const auto rows = sweep(base, axis, values, train_ds, eval_ds, sweep_opts.out_dir);
            const std::string table = format_sweep_table(sweep_axis_name, rows);
            cli_detail::write_text(fs::path(sweep_opts.out_dir) / "sweep.txt", table);
            cli_detail::write_text(fs::path(sweep_opts.out_dir) / "sweep.json",
                                   sweep_to_json(sweep_axis_name, rows).dump(2) + "\n");
            std::cout << table;
            return 0;
        }

        if (attn_cmd->parsed()) {
            const LoadedCheckpoint ckpt = load_checkpoint(attn_ckpt);
            const Dataset ds = load_dataset(attn_data);
            if (attn_seq < 0 || attn_seq >= static_cast<int>(ds.sequences.size()))
                throw UsageError("--sequence out of range");
            const MotionSequence& seq = ds.sequences[attn_seq];
            const int center = attn_center < 0 ? seq.length / 2 : attn_center;
            const ModelConfig& mc = ckpt.model.config();
            const WindowSample win = window(seq, center, mc.t_len);
            const MaskSpec mask = cli_detail::mask_from_list(attn_mask_csv, mc.t_len);
            NoGradGuard ng;
            AttnCapture cap;
            ckpt.model.forward(features_tensor(win), mask, &cap);
            fs::create_directories(attn_opts.out_dir);
            const fs::path out = fs::path(attn_opts.out_dir) / "attention.json";
            cli_detail::write_text(out, cli_detail::capture_to_json(cap).dump(2) + "\n");
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }

        if (pc_cmd->parsed()) {
            const ConfigMap cfg = cli_detail::resolve_config(pc_opts);
            const TrainConfig tc = train_config_from_map(cfg);
            GlotModel model(tc.model, tc.seed, !tc.gmm_only);
            std::size_t gmm_reg = 0, lpc_reg = 0;
            for (const auto& [name, t] : model.params().items()) {
                if (name.rfind("gmm/", 0) == 0)
                    gmm_reg += t.size();
                else if (name.rfind("lpc/", 0) == 0)
                    lpc_reg += t.size();
            }
            const std::size_t gmm_formula = gmm_param_count(tc.model);
            const std::size_t lpc_formula = tc.gmm_only ? 0 : lpc_param_count(tc.model);
            std::printf("%-8s %14s %14s\n", "section", "formula", "registry");
            std::printf("%-8s %14zu %14zu\n", "gmm", gmm_formula, gmm_reg);
            std::printf("%-8s %14zu %14zu\n", "lpc", lpc_formula, lpc_reg);
            std::printf("%-8s %14zu %14zu\n", "total", gmm_formula + lpc_formula,
                        model.params().total_count());
            const bool ok = gmm_formula == gmm_reg && lpc_formula == lpc_reg &&
                            gmm_formula + lpc_formula == model.params().total_count();
            if (!ok) std::fprintf(stderr, "parameter count mismatch\n");
            return ok ? 0 : 1;
        }

        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const ConfigMismatch& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const CorruptFile& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const VersionMismatch& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
}

}  // namespace glot
