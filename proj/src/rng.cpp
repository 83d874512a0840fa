// SPDX-License-Identifier: Apache-2.0
#include "fedwing/rng.hpp"

#include <algorithm>
#include <numeric>

namespace fedwing {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (c + 0x85157af5d5a2c4beULL));
  return h;
}

std::size_t Rng::geometric_trials(double p) {
  if (p >= 1.0) return 1;
  return std::geometric_distribution<std::size_t>(p)(engine_) + 1;
}

std::size_t Rng::geometric_failures(double p) {
  if (p >= 1.0) return 0;
  return std::geometric_distribution<std::size_t>(p)(engine_);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with our own index draws; std::shuffle's algorithm is
  // implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace fedwing
