#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mb {

// Deterministic splitmix64 stream. Self-contained so results are identical
// across standard libraries and platforms; std:: distributions are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n) via Lemire's multiply-shift rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n <= 1) return 0;
        for (;;) {
            std::uint64_t x = next_u64();
            unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
            std::uint64_t lo = static_cast<std::uint64_t>(m);
            if (lo >= n || lo >= (0ULL - n) % n) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    // Standard normal, Box-Muller. One spare value is cached.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over a tag string, mixed with the base seed. Used to derive
// independent named streams (data / masks / split / init / shuffle) from one
// experiment seed, so paired runs stay paired.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ULL;
    }
    h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    Rng mix(h);
    return mix.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    return derive_seed(derive_seed(seed, tag), std::to_string(index));
}

}  // namespace mb
