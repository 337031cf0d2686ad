#pragma once

#include <cstdint>
#include <random>

namespace deepntk {

/// Role of a random tensor inside a network. Streams are keyed by
/// (seed, layer, role) so that changing the depth never reshuffles the
/// draws of earlier layers.
enum class StreamRole : std::uint32_t {
    HiddenRow = 1,    // u^l
    HiddenBias = 2,   // v^l
    Weight = 3,       // dense/kaiming weights
    Bias = 4,         // dense/kaiming biases
    Dataset = 5,
    MonteCarlo = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t layer, StreamRole role) {
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ (layer * 0x100000001b3ULL));
    key = splitmix64(key ^ static_cast<std::uint64_t>(role));
    return std::mt19937_64(key);
}

}  // namespace deepntk
