#pragma once

#include <string>
#include <vector>

namespace diffmark {

enum class F1Mode { theorem, zero };

// Diffusion variance schedule plus every scalar family derived from it.
// Arrays are 1-based in t: index 0 holds the t=0 convention values
// (beta/alpha unused, alpha_bar[0] = 1, f2[0] = 0). Immutable once built.
struct VarianceSchedule {
    int T = 0;
    std::vector<double> beta;       // [0..T], beta[0] unused (= 0)
    std::vector<double> alpha;      // [0..T], alpha[0] = 1
    std::vector<double> alpha_bar;  // [0..T], alpha_bar[0] = 1, strictly decreasing
    double K = 0.0;                 // 1 / max_t S(t)
    std::vector<double> f2_table;   // [0..T], f2[0] = 0, max = 1
    int f2_argmax = 0;              // step where f2 reaches 1
};

// Linear beta ramp inclusive of both endpoints. Populates alpha, alpha_bar,
// K and the f2 table. Rejects non-finite or out-of-range bounds.
VarianceSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// K = 1 / max_t S(t) with S(t) = sqrt(abar_t) * sum_{i<=t} (1-alpha_i) / (sqrt(abar_i) sqrt(1-abar_i)).
// Rejects schedules where 1 - abar_i == 0 for some i >= 1.
double compute_K(const VarianceSchedule& schedule);

// f1(t): sqrt(abar_t) in theorem mode (f1(0) = 1), identically 0 in zero mode.
double compute_f1(const VarianceSchedule& schedule, int t, F1Mode mode);

// f2(t) = sqrt(abar_t) * sum_{i=1..t} h(i)/sqrt(abar_i), h(i) = (1-alpha_i)/sqrt(1-abar_i) * K.
// Empty sum at t=0. Normally read from f2_table; this recomputes from scratch.
double compute_f2(const VarianceSchedule& schedule, int t);

// CSV dump: columns t, beta, alpha, alpha_bar, f1_theorem, f2.
void write_schedule_csv(const VarianceSchedule& schedule, const std::string& path);

// SHA-256 hex fingerprint of the beta array plus K; checkpoints refuse to
// load against a schedule with a different fingerprint.
std::string schedule_fingerprint(const VarianceSchedule& schedule);

}  // namespace diffmark
