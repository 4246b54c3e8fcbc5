#pragma once

#include <bit>
#include <cstdint>

namespace support {

// Fraction of the k-subsets of n samples (the first c of them correct) that
// contain at least one correct sample, found by visiting every subset.
inline double pass_at_k_by_enumeration(int n, int c, int k) {
  const std::uint32_t correct = (1u << c) - 1u;
  std::uint64_t subsets = 0;
  std::uint64_t hits = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    ++subsets;
    if (mask & correct) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(subsets);
}

}  // namespace support
