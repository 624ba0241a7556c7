#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pdakit {

// splitmix64 finalizer; used to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Seed-splitting rule: sub-stream k of seed s is mix64(s ^ (k+1)*golden).
// Replicate r of a base seed uses base_seed + r, then sub-streams for
// initial conditions (0) and disturbances (1, 2, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return mix64(base ^ ((stream + 1) * 0x9E3779B97F4A7C15ULL));
}

// mt19937_64 with a Box-Muller normal transform written out explicitly so a
// given seed produces the same stream on every standard library.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace pdakit
