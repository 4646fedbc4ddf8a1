#include "apsgd/rng.hpp"

namespace apsgd {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(splitmix64(seed) ^ splitmix64(~stream))) {}

Rng Rng::split(std::uint64_t child) const {
  return Rng(seed_, splitmix64(stream_ * 0x100000001b3ULL + child + 1));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

double Rng::normal() { return normal_(engine_); }

Vector Rng::normal_vector(int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal_(engine_);
  return v;
}

}  // namespace apsgd
