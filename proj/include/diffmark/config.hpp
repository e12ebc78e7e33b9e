#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diffmark/reverse.hpp"
#include "diffmark/schedule.hpp"
#include "diffmark/training.hpp"
#include "diffmark/verification.hpp"
#include "diffmark/watermark.hpp"

namespace diffmark {

// Flat five-block run configuration. Unknown keys anywhere are errors, so a
// typo in an experiment sweep fails loudly instead of silently using a
// default.
struct RunConfig {
    // schedule block
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // watermark block
    MarkShape shape = MarkShape::square;
    MarkPosition position = MarkPosition::bottom_right;
    int mark_size = 7;
    std::vector<double> color = {1.0};
    double gamma = 0.8;
    double t_A_fraction = 0.5;  // concrete t_A = round(fraction * T)
    F1Mode f1_mode = F1Mode::zero;
    ScaleMode scale_mode = ScaleMode::dynamic_batch_max;
    std::string pattern_png;  // when nonempty, overrides the generated pattern

    // training block
    TrainConfig training;

    // sampling block
    int sample_batch = 100;
    std::vector<double> snapshot_fractions = {1.0, 0.75, 0.5, 0.25};
    SigmaMode sigma_mode = SigmaMode::gamma_squared;

    // verification block
    double threshold = 0.1;
    bool edgesconvert = false;
    VerifyParams verify_params;

    // paths block
    std::string dataset;     // IDX path or "synthetic:<kind>:<n>:<size>"
    std::string output_dir;  // empty -> env default root

    uint64_t seed = 0;

    int t_A() const { return int(t_A_fraction * T + 0.5); }
    std::vector<int> snapshot_steps() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config_json(const std::string& json_text);
std::string run_config_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// Builds the schedule, pattern and spec described by the config.
VarianceSchedule schedule_from_config(const RunConfig& config);
WatermarkSpec watermark_spec_from_config(const RunConfig& config, int canvas_h, int canvas_w,
                                         int channels);

// Loads paths.dataset: either an IDX file or a synthetic spec string
// "synthetic:blobs:<n>:<size>" / "synthetic:digits:<n>:<size>".
ImageBatch dataset_from_config(const RunConfig& config);

}  // namespace diffmark
