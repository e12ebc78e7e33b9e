#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "diffmark/config.hpp"
#include "diffmark/runner.hpp"

using namespace diffmark;

int main(int argc, char** argv) {
    CLI::App app{"diffmark: diffusion-process watermark embedding, sampling and verification"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    long long seed_override = -1;
    app.add_option("--config", config_path, "run configuration JSON")->required();
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--out", out_dir, "output directory (default: config paths.output_dir or $DIFFMARK_OUT)");

    CLI::App* cmd_train = app.add_subcommand("train", "train a watermarked denoiser");

    std::string checkpoint_path;
    bool use_oracle = false, use_ema = false;
    CLI::App* cmd_sample = app.add_subcommand("sample", "run the reverse process and export trajectories");
    cmd_sample->add_option("--checkpoint", checkpoint_path, "checkpoint file from train");
    cmd_sample->add_flag("--oracle", use_oracle, "use the analytic oracle denoiser (single-image corpora)");
    cmd_sample->add_flag("--ema", use_ema, "sample with EMA parameters when present");

    std::string target_path, pattern_path;
    CLI::App* cmd_verify = app.add_subcommand("verify", "verify a watermark in an averaged snapshot");
    cmd_verify->add_option("--target", target_path, "x_avg image (PNG or trajectory .npz)")->required();
    cmd_verify->add_option("--pattern", pattern_path, "pattern image; default: generated from config");

    CLI::App* cmd_oracle = app.add_subcommand("oracle-check", "run the analytic/Monte-Carlo invariant suite");

    std::string real_features, gen_features, probs_path;
    int knn_k = 3, is_splits = 10;
    CLI::App* cmd_metrics = app.add_subcommand("metrics", "numeric metrics over feature/probability files");
    cmd_metrics->add_option("--real", real_features, "real feature .npz (array 'features')");
    cmd_metrics->add_option("--gen", gen_features, "generated feature .npz");
    cmd_metrics->add_option("--probs", probs_path, "class probability .npz (array 'probs')");
    cmd_metrics->add_option("--k", knn_k, "k for precision/recall");
    cmd_metrics->add_option("--splits", is_splits, "inception score splits");

    std::vector<std::string> trajectory_files;
    std::vector<double> plot_fractions;
    int cell_scale = 4, margin = 2;
    CLI::App* cmd_plot = app.add_subcommand("plot", "trajectory strips / comparison grids");
    cmd_plot->add_option("trajectories", trajectory_files, "trajectory .npz files, one row each");
    cmd_plot->add_option("--steps", plot_fractions, "step fractions of T to display");
    cmd_plot->add_option("--cell-scale", cell_scale, "integer upscale per cell");
    cmd_plot->add_option("--margin", margin, "margin pixels around cells");

    CLI11_PARSE(app, argc, argv);

    RunConfig config;
    try {
        config = load_run_config(config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "{\"error\": {\"stage\": \"config\", \"message\": \"%s\"}}\n", e.what());
        return 2;
    }
    if (seed_override >= 0) {
        config.seed = uint64_t(seed_override);
        config.training.seed = config.seed;
    }
    std::string dir = resolve_output_dir(config, out_dir);

    RunResult result;
    if (cmd_train->parsed()) {
        result = run_train(config, dir);
    } else if (cmd_sample->parsed()) {
        result = run_sample(config, dir, checkpoint_path, use_oracle, use_ema);
    } else if (cmd_verify->parsed()) {
        result = run_verify(config, dir, target_path, pattern_path);
    } else if (cmd_oracle->parsed()) {
        result = run_oracle_check(config, dir);
    } else if (cmd_metrics->parsed()) {
        result = run_metrics(config, dir, real_features, gen_features, probs_path, knn_k, is_splits);
    } else if (cmd_plot->parsed()) {
        result = run_plot(config, dir, trajectory_files, plot_fractions, cell_scale, margin);
    }

    if (result.exit_code != 0 && !result.error.empty())
        std::fprintf(stderr, "%s\n", result.error.c_str());
    return result.exit_code;
}
