#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace evopipe {

// Deterministic PRNG with a fixed algorithm (splitmix64) so that results are
// bit-identical across standard libraries and platforms. std::uniform_*
// distributions are implementation-defined and must not be used anywhere
// reproducibility matters.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform in [0, n); n > 0. Modulo bias is negligible for the small n used here
    // but we reject-sample anyway to keep draws exact.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // uniform integer in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_below(n)); }

    // Box-Muller; the spare value is kept so one draw costs one transform on average.
    double normal(double mean, double stddev) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Seed derivation. Used to give every pipeline node / fold / offspring its own
// independent stream: hash_seed(master, tag, indices...).
inline std::uint64_t mix_u64(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

inline std::uint64_t hash_str(std::uint64_t h, std::string_view s) {
    for (char c : s) h = mix_u64(h, static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return mix_u64(h, s.size());
}

template <typename... Parts>
std::uint64_t hash_seed(std::uint64_t seed, Parts... parts) {
    std::uint64_t h = mix_u64(0x5bd1e995u, seed);
    ((h = [&] {
         if constexpr (std::is_convertible_v<Parts, std::string_view>)
             return hash_str(h, std::string_view(parts));
         else
             return mix_u64(h, static_cast<std::uint64_t>(parts));
     }()),
     ...);
    return h;
}

}  // namespace evopipe
