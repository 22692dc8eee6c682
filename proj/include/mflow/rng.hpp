#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mflow {

// splitmix64 step, used to derive independent stream seeds from (seed, tags).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s ^= a + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= b + 0x7f4a7c159e3779b9ULL;
    h ^= splitmix64(s);
    s ^= c + 0x2545f4914f6cdd1dULL;
    h ^= splitmix64(s);
    return h;
}

// Deterministic double-precision RNG on top of mt19937_64.
//
// All distributions are hand-rolled (uniform from the top 53 bits, normals by
// Box-Muller) so that streams are bit-identical across standard libraries;
// std::normal_distribution and friends are implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // fair coin mapped to {-1.0, +1.0}
    double sign() {
        return (engine_() & 1ULL) ? 1.0 : -1.0;
    }

    // standard normal via Box-Muller; one spare value is cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mflow
