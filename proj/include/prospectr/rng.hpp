#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace prospectr {

// Splittable counter-based generator. Every draw is a pure function of
// (key, counter), so streams can be derived per epoch / sample / pixel and
// results do not depend on evaluation order or thread scheduling.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : key_(mix(seed + kGolden, stream + 1)) {}

    uint64_t next_u64() { return mix(key_, ++counter_); }

    // Child generator with an independent stream. Pure: does not advance *this.
    Rng split(uint64_t stream) const {
        Rng child(0);
        child.key_ = mix(key_, kSplitTag + stream);
        child.counter_ = 0;
        return child;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (cosine branch only; no cached state).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Uniform integer in [0, n), bias-free by rejection.
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Fisher-Yates.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        std::vector<int64_t> pool(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        std::vector<int64_t> out;
        out.reserve(static_cast<size_t>(k));
        for (int64_t i = 0; i < k && i < n; ++i) {
            int64_t j = i + static_cast<int64_t>(below(static_cast<uint64_t>(n - i)));
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
            out.push_back(pool[static_cast<size_t>(i)]);
        }
        return out;
    }

private:
    static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;
    static constexpr uint64_t kSplitTag = 0xD1B54A32D192ED03ull;
    static constexpr double kPi = 3.14159265358979323846;

    // SplitMix64-style avalanche over a keyed counter.
    static uint64_t mix(uint64_t key, uint64_t ctr) {
        uint64_t z = key + ctr * kGolden;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        z = z ^ (z >> 31);
        // one extra round so key and counter interact twice
        z += key ^ (ctr << 1);
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
        z = z ^ (z >> 33);
        return z;
    }

    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace prospectr
