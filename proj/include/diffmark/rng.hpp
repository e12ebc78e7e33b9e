#pragma once

#include <cstdint>
#include <random>

namespace diffmark {

// Counter-based seed derivation: every consumer of randomness receives its own
// stream derived from (root_seed, stream, index), so sub-runs are reproducible
// independently of execution order.
uint64_t derive_seed(uint64_t root_seed, uint64_t stream, uint64_t index = 0);

// Deterministic normal/uniform source. Box-Muller on top of mt19937_64 rather
// than std::normal_distribution, whose output sequence is implementation-defined.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    static Rng derived(uint64_t root_seed, uint64_t stream, uint64_t index = 0) {
        return Rng(derive_seed(root_seed, stream, index));
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

    double normal();

    // Uniform integer in [lo, hi] via rejection-free Lemire-style mapping.
    int uniform_int(int lo, int hi);

    uint64_t raw() { return gen_(); }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace diffmark
