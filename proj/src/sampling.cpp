// SPDX-License-Identifier: Apache-2.0
#include "fedwing/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "fedwing/error.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {

std::size_t participant_count(std::size_t clients, double participation) {
  if (clients == 0) fail("federation-harness", "no clients to sample from");
  if (!(participation > 0.0 && participation <= 1.0)) {
    fail("federation-harness", "participation rate must lie in (0, 1]");
  }
  // Guard against C*N landing a hair above an integer through rounding.
  const double raw = participation * static_cast<double>(clients);
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(count, 1, clients);
}

std::vector<std::size_t> sample_clients(std::size_t clients, double participation, Rng& rng) {
  const std::size_t count = participant_count(clients, participation);
  auto order = rng.permutation(clients);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace fedwing
