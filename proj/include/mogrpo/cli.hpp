#pragma once

// The `mogrpo` command-line tool. Exit codes: 0 success, 1 configuration or runtime failure,
// 2 usage error.

#include "mogrpo/experiment.hpp"
#include "mogrpo/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mogrpo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CommonOptions {
    std::string config = "default";
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct Options {
    CommonOptions common;
    std::string checkpoint;    // eval / analyze-fft / conflict-stats
    std::string latents;       // analyze-fft: analyze an existing dump
    bool stochastic = false;   // eval / analyze-fft
    bool dump_latents = false; // analyze-fft
    std::size_t groups = 32;   // conflict-stats
    std::vector<double> alphas{0.0, 0.2, 0.5, 0.8, 1.0};
    double a_prompt = 1.0; // emit-sars-surface
    std::size_t points = 41;
};

/// Resolved configuration plus the run directory for one invocation.
struct Run {
    RunConfig cfg;
    std::filesystem::path dir;
    std::ostream* log;

    Run(const CommonOptions& o, std::ostream& log_stream) : log(&log_stream) {
        cfg = load_config(o.config);
        if (o.seed) {
            cfg.seed = *o.seed;
            cfg.resolve();
        }
        dir = o.out.empty() ? output_dir(cfg) : std::filesystem::path(o.out);
        cfg.out_dir = dir.string();
        std::filesystem::create_directories(dir);
        write_resolved_config(dir, cfg);
    }

    std::filesystem::path pretrained_path() const {
        return cfg.pretrained.empty() ? dir / "pretrained.ckpt" : std::filesystem::path(cfg.pretrained);
    }

    /// The configured pretrained checkpoint; pretrains into the run directory when none is configured yet.
    MlpParams pretrained(Manifest& m) {
        const auto path = pretrained_path();
        m.seeds["pretrain"] = cfg.pretrain.seed;
        if (std::filesystem::exists(path)) {
            auto ck = load_checkpoint(path);
            if (ck.params.arch != cfg.arch())
                throw InvalidInput("pretrained checkpoint " + path.string() + " does not match the configured model");
            return ck.params;
        }
        if (!cfg.pretrained.empty()) throw InvalidInput("pretrained checkpoint not found: " + path.string());
        *log << "no pretrained checkpoint at " << path.string() << ", pretraining (" << cfg.pretrain.max_steps
             << " steps)\n";
        const auto data = pretraining_dataset(cfg);
        auto pr = pretrain_policy(cfg, data);
        save_checkpoint(path, {pr.params, cfg.pretrain.max_steps, cfg.pretrain.seed});
        m.files.push_back(path.filename().string());
        return pr.params;
    }

    void finish(Manifest& m) {
        m.seeds["run"] = cfg.seed;
        m.seeds["eval"] = cfg.eval_seed;
        write_manifest(dir, m, cfg);
        *log << "wrote " << dir.string() << "\n";
    }
};

inline void print_summary(std::ostream& os, const std::string& label, const EvalSummary& s) {
    os << std::fixed << std::setprecision(4) << label << ": r_id " << s.mean_r_id << " (sd " << s.std_r_id
       << "), r_prompt " << s.mean_r_prompt << " (sd " << s.std_r_prompt << ")\n"
       << std::defaultfloat;
}

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_pretrain(Run& run) {
    Manifest m("pretrain");
    const auto data = pretraining_dataset(run.cfg);
    save_dataset(run.dir / "dataset.bin", data, run.cfg.env, run.cfg.pretrain.seed);
    const auto t0 = std::chrono::steady_clock::now();
    auto pr = pretrain_policy(run.cfg, data);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_checkpoint(run.dir / "pretrained.ckpt", {pr.params, run.cfg.pretrain.max_steps, run.cfg.pretrain.seed});
    save_checkpoint(run.dir / "final.ckpt", {pr.params, run.cfg.pretrain.max_steps, run.cfg.pretrain.seed});
    write_losses_csv(run.dir / "losses.csv", pr.losses);
    const auto ev = evaluate(pr.params, run.cfg);
    write_pareto_csv(run.dir / "pareto.csv", ev);
    print_summary(*run.log, "pretrained", ev);
    m.seeds["pretrain"] = run.cfg.pretrain.seed;
    m.tables = {{"losses.csv", &schema::losses}, {"pareto.csv", &schema::pareto}};
    m.files = {"dataset.bin", "pretrained.ckpt", "final.ckpt"};
    m.extra = {{"eval", eval_summary_json(ev)}, {"seconds", secs}};
    run.finish(m);
}

/// One GRPO run from the pretrained policy; writes `metrics_file` and `checkpoint_file`.
inline nlohmann::json train_run(Run& run, Manifest& m, const MlpParams& init, const TrainConfig& tc,
                                const std::string& metrics_file, const std::string& checkpoint_file) {
    const auto stem = std::filesystem::path(checkpoint_file).stem().string();
    auto res = train_grpo(tc, run.cfg.env, init, [&](std::size_t it, const MlpParams& p) {
        const auto name = stem + "_" + std::to_string(it) + ".ckpt";
        save_checkpoint(run.dir / name, {p, it, tc.seed});
        m.files.push_back(name);
    });
    narrow_to_f32(res.params);
    write_metrics_csv(run.dir / metrics_file, res.metrics);
    save_checkpoint(run.dir / checkpoint_file, {res.params, tc.iterations, tc.seed});
    m.tables[metrics_file] = &schema::metrics;
    m.files.push_back(checkpoint_file);
    const auto ev = evaluate(res.params, run.cfg);
    print_summary(*run.log, std::string(to_string(tc.mode)) + " (" + metrics_file + ")", ev);
    return eval_summary_json(ev);
}

inline void cmd_train(Run& run) {
    Manifest m("train");
    const auto init = run.pretrained(m);
    const auto base = evaluate(init, run.cfg);
    print_summary(*run.log, "pretrained", base);
    train_run(run, m, init, run.cfg.train, "metrics.csv", "final.ckpt");
    const auto ev = evaluate(load_checkpoint(run.dir / "final.ckpt").params, run.cfg);
    write_pareto_csv(run.dir / "pareto.csv", ev);
    m.tables["pareto.csv"] = &schema::pareto;
    m.extra = {{"baseline", eval_summary_json(base)},
               {"final", eval_summary_json(ev)},
               {"delta_r_id", ev.mean_r_id - base.mean_r_id},
               {"delta_r_prompt", ev.mean_r_prompt - base.mean_r_prompt}};
    run.finish(m);
}

inline void cmd_sft(Run& run) {
    Manifest m("sft");
    const auto init = run.pretrained(m);
    const auto base = evaluate(init, run.cfg);
    const auto data = pretraining_dataset(run.cfg);
    auto pr = sft_finetune(run.cfg.train, init, data, run.cfg.env);
    narrow_to_f32(pr.params);
    save_checkpoint(run.dir / "final.ckpt", {pr.params, run.cfg.train.sft_steps, run.cfg.seed});
    write_losses_csv(run.dir / "losses.csv", pr.losses);
    const auto ev = evaluate(pr.params, run.cfg);
    write_pareto_csv(run.dir / "pareto.csv", ev);
    print_summary(*run.log, "pretrained", base);
    print_summary(*run.log, "sft", ev);
    m.tables = {{"losses.csv", &schema::losses}, {"pareto.csv", &schema::pareto}};
    m.files.push_back("final.ckpt");
    m.extra = {{"baseline", eval_summary_json(base)}, {"final", eval_summary_json(ev)}};
    run.finish(m);
}

inline MlpParams checkpoint_or(Run& run, const std::string& path, Manifest& m) {
    if (!path.empty()) return load_checkpoint(path).params;
    if (std::filesystem::exists(run.dir / "final.ckpt")) return load_checkpoint(run.dir / "final.ckpt").params;
    return run.pretrained(m);
}

inline void cmd_eval(Run& run, const Options& o) {
    Manifest m("eval");
    const auto params = checkpoint_or(run, o.checkpoint, m);
    const auto ev = evaluate(params, run.cfg, o.stochastic);
    write_pareto_csv(run.dir / "pareto.csv", ev);
    write_json(run.dir / "eval.json", eval_summary_json(ev));
    print_summary(*run.log, o.stochastic ? "eval (stochastic)" : "eval", ev);
    m.tables = {{"pareto.csv", &schema::pareto}};
    m.files.push_back("eval.json");
    m.extra = {{"eval", eval_summary_json(ev)}, {"stochastic", o.stochastic}};
    run.finish(m);
}

inline void cmd_emit_sars(Run& run, const Options& o) {
    Manifest m("emit-sars-surface");
    const auto rows = sars_cross_section(o.a_prompt, -3.0, 3.0, o.points, run.cfg.train.shaping);
    write_sars_surface_csv(run.dir / "sars_surface.csv", rows);
    m.tables = {{"sars_surface.csv", &schema::sars_surface}};
    m.extra = {{"a_prompt", o.a_prompt}};
    run.finish(m);
}

inline void cmd_emit_tdw(Run& run) {
    Manifest m("emit-tdw");
    const auto diag = validate_schedule(run.cfg.train.tdw);
    write_tdw_csv(run.dir / "tdw.csv", run.cfg.train.tdw);
    m.tables = {{"tdw.csv", &schema::tdw}};
    m.extra = {{"gap_at_prompt_end", diag.gap_at_prompt_end},
               {"gap_at_id_start", diag.gap_at_id_start},
               {"monotonicity_violations", diag.monotonicity_violations},
               {"messages", diag.messages}};
    run.finish(m);
}

inline void cmd_analyze_fft(Run& run, const Options& o) {
    Manifest m("analyze-fft");
    std::vector<std::vector<Tensor>> estimates;
    if (!o.latents.empty()) {
        for (const auto& seq : read_latent_dump(o.latents))
            estimates.push_back(clean_estimates_from_latents(seq, run.cfg.train.sampler));
    } else {
        const auto params = checkpoint_or(run, o.checkpoint, m);
        const auto trajs = analysis_trajectories(params, run.cfg, run.cfg.fft_trajectories, o.stochastic);
        for (const auto& t : trajs) estimates.push_back(clean_estimates(t));
        write_trajectory_jsonl(run.dir / "trajectories.jsonl", trajs);
        m.files.push_back("trajectories.jsonl");
        if (o.dump_latents) {
            write_latent_dump(run.dir / "latents.bin", trajs);
            m.files.push_back("latents.bin");
        }
    }
    const auto curve = analyze_fft(estimates, run.cfg.fft_cutoff);
    const auto settle = mean_settle_steps(estimates, run.cfg.fft_cutoff);
    write_fft_csv(run.dir / "fft.csv", curve, run.cfg.train.sampler);
    const auto lo = settle_index(curve.low_fraction), hi = settle_index(curve.high_fraction);
    *run.log << "mean settle step: low band " << settle.low << ", high band " << settle.high << " (of "
             << curve.steps() << "; averaged curve " << lo << " / " << hi << ")\n";
    m.tables = {{"fft.csv", &schema::fft}};
    m.extra = {{"mean_low_settle_step", settle.low},
               {"mean_high_settle_step", settle.high},
               {"low_settle_step", lo},
               {"high_settle_step", hi},
               {"trajectories", curve.trajectories},
               {"cutoff_fraction", curve.cutoff_fraction},
               {"stochastic", o.stochastic}};
    run.finish(m);
}

inline void cmd_conflict_stats(Run& run, const Options& o) {
    Manifest m("conflict-stats");
    const auto params = o.checkpoint.empty() ? run.pretrained(m) : load_checkpoint(o.checkpoint).params;
    const auto pairs = rollout_advantages(params, run.cfg, o.groups, run.cfg.seed);
    const auto st = conflict_stats(pairs);
    write_conflict_csv(run.dir / "conflict.csv", st);
    *run.log << "conflict fraction " << st.fraction_conflict() << " over " << st.total() << " samples\n";
    m.tables = {{"conflict.csv", &schema::conflict}};
    m.extra = {{"samples", st.total()}, {"conflict_fraction", st.fraction_conflict()}};
    run.finish(m);
}

inline std::string alpha_tag(double a) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << a;
    return os.str();
}

inline void cmd_sweep_alpha(Run& run, const Options& o) {
    Manifest m("sweep-alpha");
    const auto init = run.pretrained(m);
    const auto base = evaluate(init, run.cfg);
    nlohmann::json results = nlohmann::json::object();
    for (double a : o.alphas) {
        TrainConfig tc = run.cfg.train;
        tc.mode = TrainMode::customized;
        tc.shaping.alpha = a;
        const auto tag = alpha_tag(a);
        results[tag] = train_run(run, m, init, tc, "metrics_alpha_" + tag + ".csv", "final_alpha_" + tag + ".ckpt");
    }
    m.extra = {{"baseline", eval_summary_json(base)}, {"alphas", o.alphas}, {"final", results}};
    run.finish(m);
}

// ---------------------------------------------------------------------------
// Dispatch

/// Parses argv and runs the selected subcommand. Diagnostics go to `err`, progress to `out`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Multi-objective GRPO toy lab"};
    app.name("mogrpo");
    app.require_subcommand(1);
    Options o;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.common.config, "config file, or 'default'");
        sub->add_option("--seed", o.common.seed, "run seed (overrides [run] seed)");
        sub->add_option("--out", o.common.out, "output directory");
        return sub;
    };
    auto* pre = add_common(app.add_subcommand("pretrain", "flow-matching pretraining on the toy corpus"));
    auto* train = add_common(app.add_subcommand("train", "GRPO fine-tuning in the configured mode"));
    auto* sft = add_common(app.add_subcommand("sft", "supervised fine-tuning on the top-ranked corpus items"));
    auto* eval = add_common(app.add_subcommand("eval", "held-out evaluation of a checkpoint"));
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate");
    eval->add_flag("--stochastic", o.stochastic, "use the stochastic sampler");
    auto* sars = add_common(app.add_subcommand("emit-sars-surface", "naive vs shaped advantage cross-section"));
    sars->add_option("--a-prompt", o.a_prompt, "fixed prompt advantage");
    sars->add_option("--points", o.points, "grid points over a_id in [-3, 3]")->check(CLI::Range(2, 100000));
    auto* tdw = add_common(app.add_subcommand("emit-tdw", "per-step weight schedule"));
    auto* fft = add_common(app.add_subcommand("analyze-fft", "frequency-band energy over sampler steps"));
    fft->add_option("--checkpoint", o.checkpoint, "policy checkpoint");
    fft->add_option("--latents", o.latents, "analyze an existing latent dump instead of sampling");
    fft->add_flag("--stochastic", o.stochastic, "analyze stochastic trajectories");
    fft->add_flag("--dump-latents", o.dump_latents, "write full per-step latents as f32 blocks");
    auto* conflict = add_common(app.add_subcommand("conflict-stats", "advantage sign statistics of rollout groups"));
    conflict->add_option("--checkpoint", o.checkpoint, "policy checkpoint (default: pretrained)");
    conflict->add_option("--groups", o.groups, "number of rollout groups")->check(CLI::Range(1, 1000000));
    auto* sweep = add_common(app.add_subcommand("sweep-alpha", "customized runs over synergy coefficients"));
    sweep->add_option("--alphas", o.alphas, "coefficients")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        bool unknown = argc > 1 && argv[1][0] != '-';
        for (const auto* sub : app.get_subcommands({}))
            if (unknown && sub->get_name() == argv[1]) unknown = false;
        if (unknown) err << "mogrpo: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
        else err << "mogrpo: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        Run run(o.common, out);
        if (pre->parsed()) cmd_pretrain(run);
        else if (train->parsed()) cmd_train(run);
        else if (sft->parsed()) cmd_sft(run);
        else if (eval->parsed()) cmd_eval(run, o);
        else if (sars->parsed()) cmd_emit_sars(run, o);
        else if (tdw->parsed()) cmd_emit_tdw(run);
        else if (fft->parsed()) cmd_analyze_fft(run, o);
        else if (conflict->parsed()) cmd_conflict_stats(run, o);
        else if (sweep->parsed()) cmd_sweep_alpha(run, o);
    } catch (const ConfigError& e) {
        err << "mogrpo: config error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "mogrpo: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

} // namespace mogrpo::cli
