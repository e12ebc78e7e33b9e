#pragma once

#include "diffmark/rng.hpp"
#include "diffmark/schedule.hpp"
#include "diffmark/tensor.hpp"
#include "diffmark/watermark.hpp"

namespace diffmark {

enum class Stage { embedding, simulation };

// One training example: the noised sample, its step, the regression target
// and the noise actually injected (kept for oracle tests).
struct TrainingPair {
    Image x_t_prime;
    int t = 0;
    Image target;      // epsilon'' the model regresses onto
    Stage stage = Stage::embedding;
    Image eps_prime;   // the N(0,1) draw used to build x_t'
};

// Vanilla forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
// t = 0 returns x0 (abar_0 = 1).
Image diffuse_vanilla(const Image& x0, int t, const Image& eps, const VarianceSchedule& schedule);

// Embedding-stage construction (t <= t_A), anchored at x0' = gamma x0 + (1-gamma) b_0:
//   x_t' = sqrt(abar_t) x0' + gamma sqrt(1-abar_t) eps' + (1-gamma)(b_t - sqrt(abar_t) b_0)
//   target = gamma eps' + (1-gamma) K x_A_scaled
// `scaled_pattern` is the pattern after whatever scaling policy the caller
// applies; pass spec.pattern for static semantics.
TrainingPair diffuse_embedding(const Image& x0, int t, const Image& eps_prime,
                               const WatermarkSpec& spec, const VarianceSchedule& schedule,
                               const Image& scaled_pattern);

// Static-pattern convenience overload.
TrainingPair diffuse_embedding(const Image& x0, int t, const Image& eps_prime,
                               const WatermarkSpec& spec, const VarianceSchedule& schedule);

// Simulation-stage construction (t > t_A):
//   x_t' = sqrt(abar_t/abar_tA) x_tA' + sqrt(1 - abar_t/abar_tA) eps', target = eps'.
TrainingPair diffuse_simulation(const Image& x_tA_prime, int t, const Image& eps_prime,
                                const WatermarkSpec& spec, const VarianceSchedule& schedule);

// Full per-sample pair construction: draws eps' from rng, applies the
// configured pattern scaling against the vanilla-noised reference, and
// dispatches on t <= t_A. For t > t_A a fresh x_tA' is built first.
TrainingPair build_training_pair(const Image& x0, int t, const WatermarkSpec& spec,
                                 const VarianceSchedule& schedule, Rng& rng);

// Batch variant: one shared dynamic scale per step (computed over the whole
// batch's vanilla-noised references), independent noise per element.
std::vector<TrainingPair> build_training_batch(const ImageBatch& x0_batch, int t,
                                               const WatermarkSpec& spec,
                                               const VarianceSchedule& schedule, Rng& rng);

// Single recursion step of the watermarked chain; exists to test that the
// closed form and the recursion agree in distribution:
//   sqrt(alpha_t) x_{t-1}' + gamma sqrt(1-alpha_t) eps + (1-gamma)(b_t - sqrt(alpha_t) b_{t-1})
// Uses the pattern as stored (static semantics). x0 is needed to evaluate
// b_t in theorem mode; zero mode ignores it.
Image recursive_step(const Image& x_prev_prime, int t, const Image& eps, const Image& x0,
                     const WatermarkSpec& spec, const VarianceSchedule& schedule);

}  // namespace diffmark
