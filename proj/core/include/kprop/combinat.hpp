#pragma once

#include "kprop/symtensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace kprop {

using IntVec = std::vector<int>;

// Multiset of nonzero blocks summing to a vector k, blocks in lexicographically
// descending order.
struct VecPartition {
  std::vector<IntVec> blocks;
  bool operator==(const VecPartition&) const = default;
};

// Integer partitions of r in descending part order, listed in reverse lexicographic order.
std::vector<IntVec> integer_partitions(int r);

// Set partitions of {0..m-1} as restricted growth strings.
std::vector<IntVec> set_partitions(int m);

// 1 + sum over blocks of (|u| - 1 - [all entries of u even]).
int vec_partition_weight(const VecPartition& nu);

bool vec_partition_connected(const VecPartition& nu, const IntVec& k);
// Every block of size <= mixed_m touches at least two groups. mixed_m = 0 imposes nothing.
bool vec_partition_mixed(const VecPartition& nu, int mixed_m);

std::vector<VecPartition> enumerate_vec_partitions(const IntVec& k, bool connected, int mixed_m,
                                                   std::optional<int> max_weight = std::nullopt);

// Number of diagrams of the given type.
std::uint64_t c_vec(const VecPartition& nu, const IntVec& k);

// Signed count of set partitions of the blocks whose parts have pairwise disjoint supports.
std::int64_t c_power(const VecPartition& nu);

// Cumulant slice with pattern lambda from power-cumulant slices:
// sum over nu of c_vec c_power prod_u slice_u. `power_slice(alpha)` returns the
// power-cumulant slice for a descending exponent vector alpha.
DiagSlice power_to_cumulant_slice(const IntVec& lambda,
                                  const std::function<const DiagSlice&(const IntVec&)>& power_slice);

// Joint cumulant of the variables listed in `vars` (repeats allowed) from a
// joint moment oracle, by Moebius inversion over set partitions.
double joint_cumulant(std::span<const int> vars, const std::function<double(std::span<const int>)>& moment);

}  // namespace kprop
