#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace codeal {

// Deterministic random stream. The engine is std::mt19937_64 (fully specified
// by the standard), but all variates are derived from raw 64-bit draws so the
// byte-for-byte output does not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two raw draws.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = bits();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Named substreams derived from a master seed by stable hashing, so that each
// random object (covariates, factors, noise, per-subproblem nets, ...) owns an
// independent stream and changing one consumer leaves the others untouched.
class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }

  std::uint64_t derive(std::string_view name, std::uint64_t a = 0,
                       std::uint64_t b = 0) const;

  Rng stream(std::string_view name, std::uint64_t a = 0,
             std::uint64_t b = 0) const {
    return Rng(derive(name, a, b));
  }

 private:
  std::uint64_t master_;
};

}  // namespace codeal
