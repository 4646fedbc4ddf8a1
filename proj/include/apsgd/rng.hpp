#pragma once

#include <cstdint>
#include <random>

#include "apsgd/linalg.hpp"

namespace apsgd {

std::uint64_t splitmix64(std::uint64_t x);

// One random stream. Streams are identified by (seed, stream id); split()
// derives an independent child stream deterministically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  Rng split(std::uint64_t child) const;

  double uniform();                          // [0, 1)
  std::size_t uniform_index(std::size_t n);  // [0, n)
  double normal();
  Vector normal_vector(int dim);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace apsgd
