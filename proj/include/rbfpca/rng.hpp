#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include "rbfpca/special.hpp"

namespace rbfpca {

// Engine phases that own independent random streams.  Any (seed, particle,
// iteration, site) tuple addresses one stream; identical tuples replay the
// identical sequence, which is what makes parallel == serial bit-exact.
enum class Site : std::uint64_t {
  init = 0,
  propagate = 1,
  resample = 2,
  analysis = 3,
  simulate = 4,
};

// Splittable SplitMix64 stream: the key tuple is hashed into an initial state
// plus a per-stream odd increment (gamma), so distinct tuples yield
// statistically independent sequences without any shared global state.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t particle, std::uint64_t iteration,
            Site site) {
    std::uint64_t h = seed;
    h = mix64(h + 0x9e3779b97f4a7c15ull * (particle + 1));
    h = mix64(h ^ (0xbf58476d1ce4e5b9ull * (iteration + 1)));
    h = mix64(h ^ (0x94d049bb133111ebull * (static_cast<std::uint64_t>(site) + 1)));
    state_ = h;
    gamma_ = mix64(h ^ 0x9e3779b97f4a7c15ull) | 1ull;
    if (std::popcount(gamma_ ^ (gamma_ >> 1)) < 24) gamma_ ^= 0xaaaaaaaaaaaaaaaaull;
  }

  std::uint64_t next_u64() {
    state_ += gamma_;
    return mix64(state_);
  }

  // strictly inside (0,1): ((x >> 12) + 1/2) * 2^-52
  double uniform() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  // one uniform per draw via the inverse CDF keeps stream accounting simple
  double normal() { return normal_quantile(uniform()); }

  double exponential() { return -std::log(uniform()); }

private:
  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  std::uint64_t gamma_;
};

}  // namespace rbfpca
