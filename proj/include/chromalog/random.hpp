#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace chromalog {

// Thin wrapper over std::mt19937_64. The engine's output sequence is fixed by
// the standard; the derived draws below avoid <random> distributions, whose
// algorithms are implementation-defined, so seeded runs match across
// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    // Box-Muller, one value per call.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; stable token hashing for embedding fallbacks.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent stream seed from a base seed and a list of salts.
template <typename... Salts>
std::uint64_t derive_seed(std::uint64_t base, Salts... salts) {
  std::uint64_t s = splitmix64(base);
  ((s = splitmix64(s ^ static_cast<std::uint64_t>(salts))), ...);
  return s;
}

}  // namespace chromalog
