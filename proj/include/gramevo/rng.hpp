#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace gramevo {

inline constexpr double kPi = 3.14159265358979323846;

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives the seed of an independent named substream. Streams are addressed
// by (name, index, subindex), so any component can claim its own stream
// without coordinating draw counts with the rest of the system. This is what
// keeps runs reproducible when evaluations happen in parallel: every consumer
// derives its stream from the master seed instead of sharing one generator.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t index = 0, std::uint64_t subindex = 0) {
  std::uint64_t x = mix64(master ^ fnv1a64(name));
  x = mix64(x ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  if (subindex != 0) x = mix64(x ^ (subindex * 0x9e3779b97f4a7c15ULL));
  return x;
}

// Deterministic random stream. All sampling is implemented on top of the raw
// 64-bit engine output; we deliberately avoid std::*_distribution because
// their algorithms are implementation-defined and would tie results to one
// standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  static RandomStream derive(std::uint64_t master, std::string_view name,
                             std::uint64_t index = 0, std::uint64_t subindex = 0) {
    return RandomStream(derive_seed(master, name, index, subindex));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform over [0, n); n must be >= 1. Rejection keeps it exactly uniform.
  std::uint64_t uniform_index(std::uint64_t n) {
    assert(n >= 1);
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Uniform over the inclusive range [lo, hi].
  long long uniform_int(long long lo, long long hi) {
    assert(lo <= hi);
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    return static_cast<long long>(static_cast<std::uint64_t>(lo) + uniform_index(span));
  }

  // Uniform over [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform_real(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller. The second variate is discarded so the stream state stays a
  // pure function of the number of draws made.
  double gaussian(double mean, double stddev) {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * kPi * u2);
  }

  // In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gramevo
