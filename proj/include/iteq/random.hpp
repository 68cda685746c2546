// Counter-derived random streams and a deterministic parallel loop.
//
// Every Monte Carlo replicate r draws from its own stream seeded by
// (seed, r), so results do not depend on how replicates are scheduled
// across threads.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>

namespace iteq {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** generator; satisfies UniformRandomBitGenerator.
class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  /// Independent stream for replicate `stream` of a computation seeded by `seed`.
  static Rng substream(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Uniform integer on [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via the polar method.
  double normal();

private:
  std::uint64_t s_[4];
};

/// Number of worker threads to use for a requested count (0 = hardware).
unsigned resolve_threads(unsigned requested);

/// Calls body(begin, end) over disjoint chunks covering [0, count).
/// Chunks may run concurrently; the body must only write to per-index state.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace iteq
