#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace modlab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based stream splitting: the seed for (master, tag_1, ..., tag_k)
/// is a hash chain over the tags, so adding replicas or particles never
/// perturbs the streams that already exist.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags)
{
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

/// Stream tags used across the library.
enum class Stream : std::uint64_t { Initial = 1, NoiseModes = 2, Increments = 3, Replica = 4 };

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> tags)
{
    return Rng(derive_seed(master, tags));
}

/// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace modlab
