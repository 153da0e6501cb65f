#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

// Deterministic, counter-addressable random numbers. Every random draw in the
// project flows from one root seed through named substreams, so parallel and
// serial runs produce identical output: a sample is a pure function of
// (stream seed, counter) rather than of evaluation order.
namespace cdhf::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives a substream seed from a parent seed and a label, so modules do not
// accidentally share streams.
inline std::uint64_t substream(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// Counter-based draws: stateless, safe from any thread.
inline std::uint64_t bits(std::uint64_t seed, std::uint64_t counter) {
    return splitmix64(seed + 0x632be59bd9b4e019ULL * (counter + 1));
}

inline double uniform01(std::uint64_t seed, std::uint64_t counter) {
    // 53 random bits into [0,1).
    return static_cast<double>(bits(seed, counter) >> 11) * 0x1.0p-53;
}

// Box-Muller on two counter slots; `counter` consumes slots 2k and 2k+1.
inline double normal(std::uint64_t seed, std::uint64_t counter) {
    double u1 = uniform01(seed, 2 * counter);
    double u2 = uniform01(seed, 2 * counter + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential generator for code that walks a stream event by event.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_bits() { return bits(seed_, counter_++); }
    double uniform() { return uniform01(seed_, counter_++); }
    double normal() {
        // Two fresh uniform slots so draws never alias uniform().
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_bits() % n; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace cdhf::rng
