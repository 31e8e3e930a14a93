#pragma once

#include <cmath>
#include <cstdint>

namespace reswm {

// Counter-based generator: draw i of stream s is splitmix64(s + i*phi).
// Every stochastic call site in a run consumes from one seeded stream in a
// fixed order, so a (seed, counter) pair fully determines all future draws.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; two draws per normal, no cached spare (keeps state
  // serializable as just (seed, counter)).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void restore(std::uint64_t seed, std::uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace reswm
