#pragma once

#include <string>
#include <vector>

#include "diffmark/config.hpp"
#include "diffmark/reverse.hpp"

namespace diffmark {

inline constexpr const char* kVersion = "0.1.0";

// Resolves the run output directory: --out flag, config paths.output_dir,
// then $DIFFMARK_OUT/run, in that order. Creates the directory.
std::string resolve_output_dir(const RunConfig& config, const std::string& cli_out);

struct RunResult {
    int exit_code = 0;
    std::string error;  // structured error JSON on failure
};

RunResult run_train(const RunConfig& config, const std::string& out_dir);
RunResult run_sample(const RunConfig& config, const std::string& out_dir,
                     const std::string& checkpoint_path, bool use_oracle_denoiser,
                     bool use_ema);
RunResult run_verify(const RunConfig& config, const std::string& out_dir,
                     const std::string& target_path, const std::string& pattern_path);
RunResult run_oracle_check(const RunConfig& config, const std::string& out_dir);
RunResult run_metrics(const RunConfig& config, const std::string& out_dir,
                      const std::string& real_features, const std::string& gen_features,
                      const std::string& probs_path, int knn_k, int is_splits);
RunResult run_plot(const RunConfig& config, const std::string& out_dir,
                   const std::vector<std::string>& trajectory_files,
                   const std::vector<double>& step_fractions, int cell_scale, int margin);

// Fig.-style strip/grid: one row per trajectory, one column per displayed
// step, each cell the batch average at that step, `cell_scale`-times nearest
// upscaled with `margin` pixels around cells. Returns the PNG path.
std::string emit_trajectory_plot(const std::vector<TrajectoryBatch>& trajectories,
                                 const std::vector<int>& steps, const std::string& out_path,
                                 int cell_scale = 4, int margin = 2);

// Loads an image for verification: PNG (values [0,1] -> as stored) or an
// .npz/.npy member (member name "x_avg" for .npz).
Image load_verify_image(const std::string& path);

}  // namespace diffmark
