#pragma once

#include <cstdint>
#include <random>

namespace airfl::rng {

// Purpose tags for independent random streams. Every consumer derives its
// engine from (root seed, stream, id, round), so changing how one stream is
// used never perturbs the draws of another.
enum class Stream : std::uint64_t {
    Partition = 1,
    Batch = 2,
    Channel = 3,
    Noise = 4,
    Policy = 5,
    Init = 6,
    Probe = 7,
    Synthetic = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 engine(std::uint64_t seed, Stream stream,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ b);
    return std::mt19937_64(s);
}

inline double uniform(std::mt19937_64& eng, double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(eng);
}

inline double normal(std::mt19937_64& eng, double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(eng);
}

}  // namespace airfl::rng
