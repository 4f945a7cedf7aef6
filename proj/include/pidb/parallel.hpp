#pragma once

#include <cstdint>

namespace pidb {

/// Parallel kernels use OpenMP; Serial runs the same loop body in order and
/// is kept as the reference the parallel results are checked against.
enum class Execution { Parallel, Serial };

/// SplitMix64 finalizer over (master, stream, index). Every random stream in
/// the library is seeded through this so results do not depend on thread
/// scheduling or on how many items were requested.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) {
  std::uint64_t z = master ^ (stream * 0xD1B54A32D192ED03ULL) ^ (index * 0x9E3779B97F4A7C15ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace pidb
