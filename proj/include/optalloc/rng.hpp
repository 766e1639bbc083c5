#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace optalloc {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for a named substream of `master`. Names follow "module:purpose" and
/// the replicate index is folded in separately, so adding a new purpose never
/// shifts the draws of an existing one.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                             std::uint64_t replicate = 0);

/// mt19937_64 with distribution code kept in-house so draws are identical
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view name, std::uint64_t replicate = 0)
      : engine_(substream_seed(master, name, replicate)) {}

  std::uint64_t bits() { return engine_(); }
  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform on {0, ..., n-1}.
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace optalloc
