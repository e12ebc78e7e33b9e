#include "diffmark/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "diffmark/hash.hpp"

namespace diffmark {

namespace {

void check_t_range(const VarianceSchedule& s, int t, int lo) {
    if (t < lo || t > s.T)
        throw std::out_of_range("schedule: step index " + std::to_string(t) + " outside [" +
                                std::to_string(lo) + ", " + std::to_string(s.T) + "]");
}

// S(t) for all t in [0, T]; shared by compute_K and compute_f2. The sum is
// accumulated once and scaled by sqrt(abar_t) at each t.
std::vector<double> compute_S(const VarianceSchedule& s) {
    std::vector<double> S(static_cast<size_t>(s.T) + 1, 0.0);
    double acc = 0.0;
    for (int i = 1; i <= s.T; ++i) {
        double one_minus_abar = 1.0 - s.alpha_bar[i];
        if (one_minus_abar <= 0.0)
            throw std::domain_error("schedule: 1 - alpha_bar[" + std::to_string(i) +
                                    "] is zero; beta schedule is degenerate");
        acc += (1.0 - s.alpha[i]) / (std::sqrt(s.alpha_bar[i]) * std::sqrt(one_minus_abar));
        S[i] = std::sqrt(s.alpha_bar[i]) * acc;
    }
    return S;
}

}  // namespace

VarianceSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
    if (!std::isfinite(beta_start) || !std::isfinite(beta_end))
        throw std::invalid_argument("make_linear_schedule: non-finite beta bound");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");

    VarianceSchedule s;
    s.T = T;
    s.beta.assign(static_cast<size_t>(T) + 1, 0.0);
    s.alpha.assign(static_cast<size_t>(T) + 1, 1.0);
    s.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        s.beta[t] = T == 1 ? beta_start
                           : beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }

    s.K = compute_K(s);
    s.f2_table.assign(static_cast<size_t>(T) + 1, 0.0);
    std::vector<double> S = compute_S(s);
    int argmax = 1;
    for (int t = 1; t <= T; ++t) {
        s.f2_table[t] = s.K * S[t];
        if (S[t] > S[argmax]) argmax = t;
    }
    s.f2_argmax = argmax;
    return s;
}

double compute_K(const VarianceSchedule& schedule) {
    if (schedule.alpha_bar.size() != static_cast<size_t>(schedule.T) + 1)
        throw std::invalid_argument("compute_K: alpha_bar not populated");
    std::vector<double> S = compute_S(schedule);
    double max_S = 0.0;
    for (int t = 1; t <= schedule.T; ++t)
        if (S[t] > max_S) max_S = S[t];
    if (!(max_S > 0.0) || !std::isfinite(max_S))
        throw std::domain_error("compute_K: S(t) has no positive finite maximum");
    return 1.0 / max_S;
}

double compute_f1(const VarianceSchedule& schedule, int t, F1Mode mode) {
    check_t_range(schedule, t, 0);
    if (mode == F1Mode::zero) return 0.0;
    return std::sqrt(schedule.alpha_bar[t]);
}

double compute_f2(const VarianceSchedule& schedule, int t) {
    check_t_range(schedule, t, 0);
    if (t == 0) return 0.0;
    double acc = 0.0;
    for (int i = 1; i <= t; ++i) {
        double one_minus_abar = 1.0 - schedule.alpha_bar[i];
        if (one_minus_abar <= 0.0)
            throw std::domain_error("compute_f2: degenerate beta schedule");
        double h = (1.0 - schedule.alpha[i]) / std::sqrt(one_minus_abar) * schedule.K;
        acc += h / std::sqrt(schedule.alpha_bar[i]);
    }
    return std::sqrt(schedule.alpha_bar[t]) * acc;
}

void write_schedule_csv(const VarianceSchedule& schedule, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_schedule_csv: cannot open " + path);
    std::fprintf(f, "t,beta,alpha,alpha_bar,f1_theorem,f2\n");
    for (int t = 0; t <= schedule.T; ++t) {
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, schedule.beta[t], schedule.alpha[t],
                     schedule.alpha_bar[t], std::sqrt(schedule.alpha_bar[t]), schedule.f2_table[t]);
    }
    std::fclose(f);
}

std::string schedule_fingerprint(const VarianceSchedule& schedule) {
    std::vector<unsigned char> bytes;
    bytes.reserve((schedule.beta.size() + 1) * sizeof(double));
    auto push_double = [&bytes](double v) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(double));
    };
    for (int t = 1; t <= schedule.T; ++t) push_double(schedule.beta[t]);
    push_double(schedule.K);
    return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace diffmark
