#pragma once

#include <cstdint>
#include <random>

namespace ttt {

using Rng = std::mt19937_64;

// Stream-split rule: the k-th independent stream of a master seed is seeded
// with splitmix64(master + (k + 1) * 0x9E3779B97F4A7C15). Nested splits
// (stream_seed(stream_seed(s, a), b)) are used for two-level keys such as
// (n, replication).
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream);

inline Rng make_stream(std::uint64_t master, std::uint64_t stream) { return Rng{stream_seed(master, stream)}; }

// Fixed stream indices used by the simulators so that reductions between
// models (single-regime switching vs plain bridge) consume identical noise.
inline constexpr std::uint64_t kNoiseStream = 0;
inline constexpr std::uint64_t kChainStream = 1;

}  // namespace ttt
