#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace pegcn {

// All randomness in this project flows through SplitMix64 (Steele, Lea &
// Flood, "Fast splittable pseudorandom number generators", OOPSLA 2014;
// the generator behind Java's SplittableRandom). State and output are a
// single 64-bit word updated with fixed constants, so identical seeds
// reproduce bit-exactly on any platform and in any language.
//
//   next():  state += 0x9E3779B97F4A7C15
//            z = state
//            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//            return z ^ (z >> 31)
//
// Uniform doubles use the top 53 bits: (next() >> 11) * 2^-53, giving a
// value in [0,1). Bounded integers use rejection sampling (no modulo
// bias). Seed derivation for substreams is documented at derive_seed().
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform in [lo,hi); returns lo when hi == lo
  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // uniform integer in [0,n), exact (rejection sampling), n > 0
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t x, r;
    do {
      x = next();
      r = x % n;
    } while (x - r > std::uint64_t(0) - n);
    return r;
  }

  // standard normal via Box-Muller; uses uniforms only
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t state_;
};

// Stateless SplitMix64 output function, used as the mixing step of
// derive_seed.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// FNV-1a 64-bit over the bytes of a string.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Substream seed derivation: fold the component tag and indices into the
// root seed, one mix64 round per component:
//
//   acc = root
//   acc = mix64(acc ^ mix64(fnv1a64(tag)))
//   for each index i:  acc = mix64(acc ^ mix64(i))
//
// Every seeded procedure in the repo names its tag ("shuffle", "noise",
// "init", ...) so one root seed reproduces a whole experiment.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                                 std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t acc = root;
  acc = mix64(acc ^ mix64(fnv1a64(tag)));
  for (std::uint64_t i : indices) acc = mix64(acc ^ mix64(i));
  return acc;
}

}  // namespace pegcn
