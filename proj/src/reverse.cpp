#include "diffmark/reverse.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace diffmark {

PosteriorParams posterior_params(const Image& x_t_prime, const Image& eps_hat, int t,
                                 const VarianceSchedule& schedule, double gamma,
                                 SigmaMode sigma_mode) {
    require_same_shape(x_t_prime, eps_hat, "posterior_params");
    if (t < 1 || t > schedule.T) throw std::out_of_range("posterior_params: t out of range");

    const double alpha_t = schedule.alpha[t];
    const double abar_t = schedule.alpha_bar[t];
    const double abar_prev = schedule.alpha_bar[t - 1];
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_t);
    const double eps_coef = (1.0 - alpha_t) / (std::sqrt(1.0 - abar_t) * std::sqrt(alpha_t));

    PosteriorParams out;
    out.mu = Image(x_t_prime.height, x_t_prime.width, x_t_prime.channels);
    for (size_t i = 0; i < out.mu.size(); ++i) {
        double m = inv_sqrt_alpha * x_t_prime.data[i] - eps_coef * eps_hat.data[i];
        if (!std::isfinite(m)) throw std::domain_error("posterior_params: non-finite mu");
        out.mu.data[i] = m;
    }
    out.sigma_sq = (1.0 - alpha_t) * (1.0 - abar_prev) / (1.0 - abar_t);
    if (sigma_mode == SigmaMode::gamma_squared) out.sigma_sq *= gamma * gamma;
    return out;
}

Image reverse_step(const Image& x_t_prime, const Image& eps_hat, int t,
                   const VarianceSchedule& schedule, double gamma, SigmaMode sigma_mode, Rng& rng) {
    PosteriorParams p = posterior_params(x_t_prime, eps_hat, t, schedule, gamma, sigma_mode);
    if (p.sigma_sq == 0.0) return p.mu;
    double sigma = std::sqrt(p.sigma_sq);
    for (double& v : p.mu.data) v += sigma * rng.normal();
    return p.mu;
}

TrajectoryBatch sample(const Denoiser& denoiser, const VarianceSchedule& schedule,
                       const WatermarkSpec& spec, const SampleOptions& options, Rng& rng) {
    spec.validate(schedule.T);
    if (options.batch_size < 1) throw std::invalid_argument("sample: batch_size must be >= 1");

    std::set<int> wanted(options.snapshot_steps.begin(), options.snapshot_steps.end());

    TrajectoryBatch traj;
    traj.sigma_mode = options.sigma_mode;

    ImageBatch x;
    x.reserve(options.batch_size);
    for (int i = 0; i < options.batch_size; ++i) {
        Image img(options.height, options.width, options.channels);
        for (double& v : img.data) v = rng.normal();
        x.push_back(std::move(img));
    }
    if (wanted.count(schedule.T)) traj.snapshots[schedule.T] = x;

    for (int t = schedule.T; t >= 1; --t) {
        ImageBatch eps_hat = denoiser(x, t);
        if (eps_hat.size() != x.size())
            throw std::runtime_error("sample: denoiser returned wrong batch size");
        for (size_t i = 0; i < x.size(); ++i) {
            if (!eps_hat[i].same_shape(x[i]))
                throw std::runtime_error("sample: denoiser output shape mismatch");
            x[i] = reverse_step(x[i], eps_hat[i], t, schedule, spec.gamma, options.sigma_mode, rng);
        }
        if (wanted.count(t - 1)) traj.snapshots[t - 1] = x;  // deep copy
    }

    traj.finals = std::move(x);
    if (spec.f1_mode == F1Mode::zero) {
        double inv_gamma = 1.0 / spec.gamma;
        for (Image& img : traj.finals)
            for (double& v : img.data) {
                v *= inv_gamma;
                if (options.clamp_finals) v = std::clamp(v, -1.0, 1.0);
            }
    }
    return traj;
}

Image average_snapshot(const ImageBatch& snapshot) {
    if (snapshot.empty()) throw std::invalid_argument("average_snapshot: empty batch");
    return batch_mean(snapshot);
}

}  // namespace diffmark
