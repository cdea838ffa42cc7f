#pragma once

#include <cstdint>
#include <random>

namespace kgdp {

using Rng = std::mt19937_64;

// Named substreams of one replication seed. A campaign never shares a
// generator between purposes, so changing the policy leaves noise draws
// untouched.
enum class Stream : std::uint64_t {
  kTruth = 1,
  kCandidateInit = 2,
  kNoise = 3,
  kPolicy = 4,
  kResampler = 5,
  kPool = 6,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic generator for (seed, stream, step). Steps index the
// campaign iteration so that a stream can be re-derived from the step
// counter alone (the advisor relies on this to stay stateless between
// requests).
inline Rng substream(std::uint64_t seed, Stream stream, std::uint64_t step = 0) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL;
  std::uint64_t b = splitmix64(s);
  s ^= step * 0x8cb92ba72f3d8dd7ULL;
  std::uint64_t c = splitmix64(s);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  return Rng(seq);
}

}  // namespace kgdp
