#include "ttt/rng.hpp"

namespace ttt {

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + (stream + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace ttt
