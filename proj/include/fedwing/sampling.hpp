// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace fedwing {

class Rng;

/// Number of participants per round: ceil(C * N), at least one.
std::size_t participant_count(std::size_t clients, double participation);

/// Uniform sample of ceil(C * N) distinct client ids, returned sorted.
std::vector<std::size_t> sample_clients(std::size_t clients, double participation, Rng& rng);

}  // namespace fedwing
