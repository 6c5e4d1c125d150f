#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace ngcl {

/// Seeded pseudo-random stream. Streams derived from the same seed with
/// different stream ids are independent for practical purposes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi); returns lo when lo == hi
  double normal();                        // N(0, 1)
  bool bernoulli(double p);
  /// Index drawn from an unnormalized non-negative weight vector.
  std::size_t categorical(std::span<const double> weights);
  /// Standard Gumbel(0, 1) draw.
  double gumbel();
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ngcl
