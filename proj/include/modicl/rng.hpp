#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace modicl {

/// Deterministic PRNG (splitmix64 core) with the handful of distributions the
/// project needs. Self-contained so that seeded artifacts are reproducible
/// independent of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    double next_double() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    uint64_t below(uint64_t n) noexcept {
        if (n <= 1) return 0;
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    uint32_t below_u32(uint32_t n) noexcept { return static_cast<uint32_t>(below(n)); }

    /// Standard normal via Box-Muller with a cached spare.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - next_double(); // (0, 1], keeps log finite
        double u2 = next_double();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) noexcept {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Draws k distinct indices from [0, n) via a partial Fisher-Yates pass.
    std::vector<uint32_t> sample_distinct(uint32_t n, uint32_t k) {
        std::vector<uint32_t> idx(n);
        for (uint32_t i = 0; i < n; ++i) idx[i] = i;
        for (uint32_t i = 0; i < k; ++i) {
            uint32_t j = i + below_u32(n - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

    /// Independent stream derived from this generator's seed; forking with
    /// distinct tags never aliases the parent sequence.
    Rng fork(uint64_t tag) const noexcept {
        uint64_t z = state_ ^ (0xD1342543DE82EF95ull * (tag + 0x632BE59BD9B4E019ull));
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
        return Rng(z ^ (z >> 33));
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace modicl
