#include "diffmark/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace diffmark {

namespace {

uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t root_seed, uint64_t stream, uint64_t index) {
    uint64_t state = root_seed;
    uint64_t a = splitmix64(state);
    state ^= stream * 0xd1342543de82ef95ULL;
    uint64_t b = splitmix64(state);
    state ^= index * 0xaf251af3b0f025b5ULL;
    uint64_t c = splitmix64(state);
    return a ^ (b + 0x2545f4914f6cdd1dULL * c);
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double theta = 2.0 * 3.14159265358979323846 * v;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int lo, int hi) {
    if (lo > hi) throw std::invalid_argument("Rng::uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    // Multiply-shift mapping; bias is < 2^-64 * span, irrelevant here.
    unsigned __int128 wide = static_cast<unsigned __int128>(gen_()) * span;
    return lo + static_cast<int>(wide >> 64);
}

}  // namespace diffmark
