#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kprop::detail {

inline std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

inline double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

inline std::uint64_t factorial_u64(int k) {
  std::uint64_t r = 1;
  for (int i = 2; i <= k; ++i) r *= static_cast<std::uint64_t>(i);
  return r;
}

// Rising factorial (a)_t = a (a+1) ... (a+t-1).
inline double pochhammer(double a, int t) {
  double r = 1.0;
  for (int i = 0; i < t; ++i) r *= a + i;
  return r;
}

inline double double_factorial(int k) {
  double r = 1.0;
  for (int i = k; i > 1; i -= 2) r *= i;
  return r;
}

// Odometer step over [n]^idx.size(); returns false after the last tuple.
inline bool next_index(std::vector<int>& idx, int n) {
  for (int p = static_cast<int>(idx.size()) - 1; p >= 0; --p) {
    if (++idx[p] < n) return true;
    idx[p] = 0;
  }
  return false;
}

inline bool all_distinct(std::span<const int> idx) {
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      if (idx[a] == idx[b]) return false;
  return true;
}

inline std::vector<int> sorted_desc(std::vector<int> v) {
  std::sort(v.begin(), v.end(), [](int a, int b) { return a > b; });
  return v;
}

}  // namespace kprop::detail
