#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace grpp::rng {

// SplitMix64 step; used to derive independent stream seeds from (seed, index)
// pairs so results never depend on scheduling or iteration order.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a;
    std::uint64_t x = splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
    return splitmix64(s);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix(mix(a, b), c);
}

// Deterministic generator. Distributions are hand-rolled on top of the raw
// 64-bit stream so sequences are reproducible bit-for-bit regardless of the
// standard library's distribution implementations.
class Engine {
  public:
    explicit Engine(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // uniform on [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Exponential(rate); uses 1 - u in (0, 1] so log never sees zero.
    double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r = gen_();
        while (r >= limit) r = gen_();
        return r % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace grpp::rng
