#include "diffmark/forward.hpp"

#include <cmath>
#include <stdexcept>

namespace diffmark {

namespace {

Image normal_image(int h, int w, int c, Rng& rng) {
    Image img(h, w, c);
    for (double& v : img.data) v = rng.normal();
    return img;
}

// Pattern after the configured scaling policy. The dynamic reference is the
// vanilla-noised sample at the same step, built from the same noise draw, so
// scaling consumes no extra randomness. All-zero patterns pass through: there
// is nothing to scale and the zero-watermark pipeline must keep working.
Image effective_pattern(const WatermarkSpec& spec, const Image& x0, int t, const Image& eps,
                        const VarianceSchedule& schedule) {
    if (spec.scale_mode == ScaleMode::static_pattern || !(spec.pattern.max_value() > 0.0))
        return spec.pattern;
    ImageBatch ref{diffuse_vanilla(x0, t, eps, schedule)};
    return scale_pattern_dynamic(spec.pattern, ref);
}

}  // namespace

Image diffuse_vanilla(const Image& x0, int t, const Image& eps, const VarianceSchedule& schedule) {
    require_same_shape(x0, eps, "diffuse_vanilla");
    if (t < 0 || t > schedule.T) throw std::out_of_range("diffuse_vanilla: t out of range");
    double a = std::sqrt(schedule.alpha_bar[t]);
    double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
    Image out(x0.height, x0.width, x0.channels);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

TrainingPair diffuse_embedding(const Image& x0, int t, const Image& eps_prime,
                               const WatermarkSpec& spec, const VarianceSchedule& schedule,
                               const Image& scaled_pattern) {
    require_same_shape(x0, eps_prime, "diffuse_embedding");
    require_same_shape(x0, scaled_pattern, "diffuse_embedding(pattern)");
    if (t < 1 || t > spec.t_A)
        throw std::invalid_argument("diffuse_embedding: t must be in [1, t_A]");

    const double g = spec.gamma;
    const double f1_t = compute_f1(schedule, t, spec.f1_mode);
    const double f1_0 = compute_f1(schedule, 0, spec.f1_mode);
    const double f2_t = schedule.f2_table[t];
    const double sqrt_abar = std::sqrt(schedule.alpha_bar[t]);
    const double noise_coef = g * std::sqrt(1.0 - schedule.alpha_bar[t]);

    Image b_t = compute_bt(x0, scaled_pattern, f1_t, f2_t);
    Image b_0 = compute_bt(x0, scaled_pattern, f1_0, 0.0);  // f2(0) = 0

    TrainingPair pair;
    pair.t = t;
    pair.stage = Stage::embedding;
    pair.eps_prime = eps_prime;
    pair.x_t_prime = Image(x0.height, x0.width, x0.channels);
    pair.target = Image(x0.height, x0.width, x0.channels);
    for (size_t i = 0; i < x0.size(); ++i) {
        // anchor at x0' = gamma x0 + (1-gamma) b_0 so the t=0 endpoint is x0
        // in theorem mode and gamma x0 in zero mode
        double x0_prime = g * x0.data[i] + (1.0 - g) * b_0.data[i];
        pair.x_t_prime.data[i] = sqrt_abar * x0_prime + noise_coef * eps_prime.data[i] +
                                 (1.0 - g) * (b_t.data[i] - sqrt_abar * b_0.data[i]);
        pair.target.data[i] =
            g * eps_prime.data[i] + (1.0 - g) * schedule.K * scaled_pattern.data[i];
    }
    return pair;
}

TrainingPair diffuse_embedding(const Image& x0, int t, const Image& eps_prime,
                               const WatermarkSpec& spec, const VarianceSchedule& schedule) {
    return diffuse_embedding(x0, t, eps_prime, spec, schedule, spec.pattern);
}

TrainingPair diffuse_simulation(const Image& x_tA_prime, int t, const Image& eps_prime,
                                const WatermarkSpec& spec, const VarianceSchedule& schedule) {
    require_same_shape(x_tA_prime, eps_prime, "diffuse_simulation");
    // t == t_A is the identity boundary (ratio 1, zero noise coefficient)
    if (t < spec.t_A || t > schedule.T)
        throw std::invalid_argument("diffuse_simulation: t must be in [t_A, T]");

    double ratio = schedule.alpha_bar[t] / schedule.alpha_bar[spec.t_A];
    double a = std::sqrt(ratio);
    double b = std::sqrt(1.0 - ratio);

    TrainingPair pair;
    pair.t = t;
    pair.stage = Stage::simulation;
    pair.eps_prime = eps_prime;
    pair.x_t_prime = Image(x_tA_prime.height, x_tA_prime.width, x_tA_prime.channels);
    for (size_t i = 0; i < x_tA_prime.size(); ++i)
        pair.x_t_prime.data[i] = a * x_tA_prime.data[i] + b * eps_prime.data[i];
    pair.target = eps_prime;
    return pair;
}

TrainingPair build_training_pair(const Image& x0, int t, const WatermarkSpec& spec,
                                 const VarianceSchedule& schedule, Rng& rng) {
    if (t < 1 || t > schedule.T) throw std::out_of_range("build_training_pair: t out of range");
    spec.validate(schedule.T);

    if (t <= spec.t_A) {
        Image eps = normal_image(x0.height, x0.width, x0.channels, rng);
        Image pat = effective_pattern(spec, x0, t, eps, schedule);
        return diffuse_embedding(x0, t, eps, spec, schedule, pat);
    }
    // Simulation stage: rebuild x_tA' with fresh noise, then diffuse onward.
    Image eps_a = normal_image(x0.height, x0.width, x0.channels, rng);
    Image pat = effective_pattern(spec, x0, spec.t_A, eps_a, schedule);
    TrainingPair at_tA = diffuse_embedding(x0, spec.t_A, eps_a, spec, schedule, pat);
    Image eps = normal_image(x0.height, x0.width, x0.channels, rng);
    return diffuse_simulation(at_tA.x_t_prime, t, eps, spec, schedule);
}

std::vector<TrainingPair> build_training_batch(const ImageBatch& x0_batch, int t,
                                               const WatermarkSpec& spec,
                                               const VarianceSchedule& schedule, Rng& rng) {
    if (x0_batch.empty()) throw std::invalid_argument("build_training_batch: empty batch");
    spec.validate(schedule.T);

    const int ref_t = t <= spec.t_A ? t : spec.t_A;
    std::vector<Image> noises;
    noises.reserve(x0_batch.size());
    ImageBatch refs;
    refs.reserve(x0_batch.size());
    for (const Image& x0 : x0_batch) {
        noises.push_back(normal_image(x0.height, x0.width, x0.channels, rng));
        refs.push_back(diffuse_vanilla(x0, ref_t, noises.back(), schedule));
    }
    Image pat = spec.pattern;
    if (spec.scale_mode == ScaleMode::dynamic_batch_max && spec.pattern.max_value() > 0.0)
        pat = scale_pattern_dynamic(spec.pattern, refs);

    std::vector<TrainingPair> out;
    out.reserve(x0_batch.size());
    for (size_t i = 0; i < x0_batch.size(); ++i) {
        if (t <= spec.t_A) {
            out.push_back(diffuse_embedding(x0_batch[i], t, noises[i], spec, schedule, pat));
        } else {
            TrainingPair at_tA = diffuse_embedding(x0_batch[i], spec.t_A, noises[i], spec, schedule, pat);
            Image eps = normal_image(x0_batch[i].height, x0_batch[i].width, x0_batch[i].channels, rng);
            out.push_back(diffuse_simulation(at_tA.x_t_prime, t, eps, spec, schedule));
        }
    }
    return out;
}

Image recursive_step(const Image& x_prev_prime, int t, const Image& eps, const Image& x0,
                     const WatermarkSpec& spec, const VarianceSchedule& schedule) {
    require_same_shape(x_prev_prime, eps, "recursive_step");
    require_same_shape(x_prev_prime, x0, "recursive_step(x0)");
    if (t < 1 || t > schedule.T) throw std::out_of_range("recursive_step: t out of range");

    const double g = spec.gamma;
    const double sqrt_a = std::sqrt(schedule.alpha[t]);
    const double noise_coef = g * std::sqrt(1.0 - schedule.alpha[t]);
    Image b_t = compute_bt(x0, spec.pattern, compute_f1(schedule, t, spec.f1_mode),
                           schedule.f2_table[t]);
    Image b_prev = compute_bt(x0, spec.pattern, compute_f1(schedule, t - 1, spec.f1_mode),
                              schedule.f2_table[t - 1]);
    Image out(x_prev_prime.height, x_prev_prime.width, x_prev_prime.channels);
    for (size_t i = 0; i < out.size(); ++i)
        out.data[i] = sqrt_a * x_prev_prime.data[i] + noise_coef * eps.data[i] +
                      (1.0 - g) * (b_t.data[i] - sqrt_a * b_prev.data[i]);
    return out;
}

}  // namespace diffmark
