#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "diffmark/denoiser.hpp"
#include "diffmark/forward.hpp"
#include "diffmark/schedule.hpp"
#include "diffmark/tensor.hpp"
#include "diffmark/watermark.hpp"

namespace diffmark {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    double learning_rate = 3e-3;
    int steps = 5000;
    int batch_size = 16;
    std::optional<double> ema_rate;  // disabled when absent; in [0,1)
    OptimizerKind optimizer = OptimizerKind::adam;
    uint64_t seed = 0;
    ToyDenoiserConfig model;
    std::string loss_log_path;  // CSV "step,t_bucket,loss" when nonempty
};

struct Checkpoint {
    static constexpr int kFormatVersion = 1;
    ParamSet params;
    std::optional<ParamSet> ema_params;
    std::string schedule_fingerprint;
    std::string spec_json;  // WatermarkSpec snapshot
    int64_t step = 0;
    ToyDenoiserConfig model;
};

// Alg-style training loop: uniform t per minibatch element, pair construction
// through the forward module, MSE against eps'', one optimizer step per
// iteration, optional EMA. Aborts with step/t/loss context if the loss goes
// non-finite.
Checkpoint train(const ImageBatch& dataset, const WatermarkSpec& spec,
                 const VarianceSchedule& schedule, const TrainConfig& config);

// ema <- rate * ema + (1 - rate) * params, elementwise. Parameter sets must
// be congruent.
void ema_update(const ParamSet& params, ParamSet& ema_params, double rate);

// The zero-watermark baseline: same two-stage pipeline, pattern zeroed.
WatermarkSpec zero_watermark_config(const WatermarkSpec& spec);

// Versioned checkpoint container (named-array file). Loading verifies the
// format version and, when a schedule is given, the schedule fingerprint.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const VarianceSchedule* expected_schedule);

std::string watermark_spec_json(const WatermarkSpec& spec);

}  // namespace diffmark
