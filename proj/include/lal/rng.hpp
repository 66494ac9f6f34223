#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lal {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Explicitly seeded generator with independent streams derived from a master
// seed. Normal variates come from our own Marsaglia polar transform so that
// trajectories are reproducible for a given seed independent of the standard
// library's distribution implementations (and of compiler sin/cos fusion,
// which the classic Box-Muller is sensitive to).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(scramble(seed)) {}

    // Stream `index` of a master seed; streams are statistically independent.
    static Rng stream(std::uint64_t master, std::uint64_t index) {
        std::uint64_t s = master;
        std::uint64_t a = splitmix64(s);
        s = a ^ (index * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
        return Rng(splitmix64(s));
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // multiply-shift; bias is negligible for n << 2^64 and it is fast and portable
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(gen_()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

  private:
    static std::uint64_t scramble(std::uint64_t seed) {
        std::uint64_t s = seed;
        return splitmix64(s);
    }

    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lal
