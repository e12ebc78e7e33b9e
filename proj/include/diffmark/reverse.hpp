#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "diffmark/rng.hpp"
#include "diffmark/schedule.hpp"
#include "diffmark/tensor.hpp"
#include "diffmark/watermark.hpp"

namespace diffmark {

// gamma_squared applies the gamma^2 factor to the posterior variance;
// vanilla keeps the original DDPM variance.
enum class SigmaMode { gamma_squared, vanilla };

// Noise predictor contract: given an image batch and a shared step index,
// return one prediction per input with identical shape.
using Denoiser = std::function<ImageBatch(const ImageBatch&, int)>;

struct PosteriorParams {
    Image mu;
    double sigma_sq = 0.0;
};

// Reverse-process output: final images plus deep-copied snapshots at the
// requested steps.
struct TrajectoryBatch {
    ImageBatch finals;
    std::map<int, ImageBatch> snapshots;
    uint64_t seed = 0;
    SigmaMode sigma_mode = SigmaMode::gamma_squared;
};

// Posterior parameters of the watermarked chain:
//   mu'     = x_t'/sqrt(alpha_t) - (1-alpha_t)/(sqrt(1-abar_t) sqrt(alpha_t)) * eps_hat
//   sigma'2 = [gamma^2] (1-alpha_t)(1-abar_{t-1})/(1-abar_t)
// mu' carries no gamma in either mode; sigma'2 drops the gamma^2 factor in
// vanilla mode. t = 1 gives sigma'2 = 0 exactly.
PosteriorParams posterior_params(const Image& x_t_prime, const Image& eps_hat, int t,
                                 const VarianceSchedule& schedule, double gamma,
                                 SigmaMode sigma_mode);

// mu' + sigma' z with z ~ N(0,1); the draw is skipped when sigma'2 == 0.
Image reverse_step(const Image& x_t_prime, const Image& eps_hat, int t,
                   const VarianceSchedule& schedule, double gamma, SigmaMode sigma_mode, Rng& rng);

struct SampleOptions {
    int batch_size = 1;
    std::vector<int> snapshot_steps;
    SigmaMode sigma_mode = SigmaMode::gamma_squared;
    int height = 16, width = 16, channels = 1;
    bool clamp_finals = true;  // clamp to [-1,1] after the gamma division
};

// Full sampling loop: x_T ~ N(0,1), then reverse_step for t = T..1. Snapshot
// copies are recorded after the step that produces each requested index.
// In zero-f1 mode the finals are divided elementwise by gamma (then clamped);
// theorem mode returns them as produced.
TrajectoryBatch sample(const Denoiser& denoiser, const VarianceSchedule& schedule,
                       const WatermarkSpec& spec, const SampleOptions& options, Rng& rng);

// Elementwise mean of a nonempty snapshot batch (x_avg).
Image average_snapshot(const ImageBatch& snapshot);

}  // namespace diffmark
