#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace panova {

// Self-contained xoshiro256++ generator.  We avoid <random> distributions on
// purpose: their output is implementation-defined, and study outputs must be
// byte-identical for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    // Replicate streams: stream k of master seed s is seeded from
    // s + (k+1)*golden-ratio, then expanded with splitmix64.  Replicates can
    // therefore run in any order (or in parallel) and still agree.
    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        return Rng(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, n).  Lemire's multiply-shift with rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        using u128 = unsigned __int128;
        std::uint64_t x = next();
        u128 m = static_cast<u128>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                x = next();
                m = static_cast<u128>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Marsaglia polar; the spare deviate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * factor;
        has_spare_ = true;
        return u * factor;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    int binomial(int trials, double p) {
        int count = 0;
        for (int i = 0; i < trials; ++i)
            if (uniform() < p) ++count;
        return count;
    }

    double chisq1() {
        const double z = normal();
        return z * z;
    }

    // n indices drawn with replacement from [0, size).
    std::vector<int> resample_indices(int size, int n) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (auto& i : idx) i = static_cast<int>(uniform_int(static_cast<std::uint64_t>(size)));
        return idx;
    }

    // Fisher-Yates shuffle of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
        for (int i = n - 1; i > 0; --i) {
            const auto j = static_cast<int>(uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
        }
        return p;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::array<std::uint64_t, 4> state_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace panova
