#include "kprop/combinat.hpp"

#include "kprop/errors.hpp"
#include "util.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace kprop {

namespace {

void partitions_rec(int remaining, int max_part, IntVec& cur, std::vector<IntVec>& out) {
  if (remaining == 0) {
    out.push_back(cur);
    return;
  }
  for (int p = std::min(remaining, max_part); p >= 1; --p) {
    cur.push_back(p);
    partitions_rec(remaining - p, p, cur, out);
    cur.pop_back();
  }
}

void set_partitions_rec(int m, int pos, int blocks, IntVec& cur, std::vector<IntVec>& out) {
  if (pos == m) {
    out.push_back(cur);
    return;
  }
  for (int b = 0; b <= blocks; ++b) {
    cur[pos] = b;
    set_partitions_rec(m, pos + 1, std::max(blocks, b + 1), cur, out);
  }
}

// All nonzero vectors u with 0 <= u <= bound entrywise, lexicographically descending.
std::vector<IntVec> sub_vectors(const IntVec& bound) {
  std::vector<IntVec> out;
  IntVec u(bound);
  const int r = static_cast<int>(bound.size());
  while (true) {
    if (std::any_of(u.begin(), u.end(), [](int v) { return v != 0; })) out.push_back(u);
    int p = r - 1;
    while (p >= 0 && u[p] == 0) {
      u[p] = bound[p];
      --p;
    }
    if (p < 0) break;
    --u[p];
  }
  return out;
}

void vec_partitions_rec(const IntVec& rem, const IntVec* upper, std::vector<IntVec>& cur,
                        std::vector<VecPartition>& out) {
  if (std::all_of(rem.begin(), rem.end(), [](int v) { return v == 0; })) {
    out.push_back(VecPartition{cur});
    return;
  }
  for (const IntVec& u : sub_vectors(rem)) {
    if (upper && u > *upper) continue;
    IntVec next(rem);
    for (std::size_t i = 0; i < rem.size(); ++i) next[i] -= u[i];
    cur.push_back(u);
    vec_partitions_rec(next, &u, cur, out);
    cur.pop_back();
  }
}

int block_size(const IntVec& u) { return std::accumulate(u.begin(), u.end(), 0); }

int support_size(const IntVec& u) {
  return static_cast<int>(std::count_if(u.begin(), u.end(), [](int v) { return v != 0; }));
}

bool disjoint(const IntVec& a, const IntVec& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0 && b[i] != 0) return false;
  return true;
}

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

}  // namespace

std::vector<IntVec> integer_partitions(int r) {
  if (r < 0) throw InvalidArgument("negative integer partition size");
  std::vector<IntVec> out;
  IntVec cur;
  partitions_rec(r, r, cur, out);
  return out;
}

std::vector<IntVec> set_partitions(int m) {
  std::vector<IntVec> out;
  IntVec cur(m, 0);
  if (m == 0) {
    out.push_back(cur);
    return out;
  }
  set_partitions_rec(m, 0, 0, cur, out);
  return out;
}

int vec_partition_weight(const VecPartition& nu) {
  int w = 1;
  for (const IntVec& u : nu.blocks) {
    const bool all_even = std::all_of(u.begin(), u.end(), [](int v) { return v % 2 == 0; });
    w += block_size(u) - 1 - (all_even ? 1 : 0);
  }
  return w;
}

bool vec_partition_connected(const VecPartition& nu, const IntVec& k) {
  const int r = static_cast<int>(k.size());
  if (r <= 1) return true;
  if (std::any_of(k.begin(), k.end(), [](int v) { return v == 0; })) return false;
  std::vector<int> parent(r);
  std::iota(parent.begin(), parent.end(), 0);
  for (const IntVec& u : nu.blocks) {
    int first = -1;
    for (int i = 0; i < r; ++i) {
      if (u[i] == 0) continue;
      if (first < 0) {
        first = i;
      } else {
        parent[find_root(parent, i)] = find_root(parent, first);
      }
    }
  }
  const int root = find_root(parent, 0);
  for (int i = 1; i < r; ++i)
    if (find_root(parent, i) != root) return false;
  return true;
}

bool vec_partition_mixed(const VecPartition& nu, int mixed_m) {
  for (const IntVec& u : nu.blocks)
    if (block_size(u) <= mixed_m && support_size(u) < 2) return false;
  return true;
}

std::vector<VecPartition> enumerate_vec_partitions(const IntVec& k, bool connected, int mixed_m,
                                                   std::optional<int> max_weight) {
  if (std::any_of(k.begin(), k.end(), [](int v) { return v < 0; }))
    throw InvalidArgument("vector partition target has a negative entry");
  std::vector<VecPartition> all;
  std::vector<IntVec> cur;
  vec_partitions_rec(k, nullptr, cur, all);
  std::vector<VecPartition> out;
  for (auto& nu : all) {
    if (connected && !vec_partition_connected(nu, k)) continue;
    if (!vec_partition_mixed(nu, mixed_m)) continue;
    if (max_weight && vec_partition_weight(nu) > *max_weight) continue;
    out.push_back(std::move(nu));
  }
  return out;
}

std::uint64_t c_vec(const VecPartition& nu, const IntVec& k) {
  std::uint64_t num = 1;
  for (int v : k) num *= detail::factorial_u64(v);
  std::map<IntVec, int> mult;
  for (const IntVec& u : nu.blocks) ++mult[u];
  std::uint64_t den = 1;
  for (const auto& [u, m] : mult) {
    den *= detail::factorial_u64(m);
    for (int v : u)
      for (int q = 0; q < m; ++q) den *= detail::factorial_u64(v);
  }
  return num / den;
}

std::int64_t c_power(const VecPartition& nu) {
  const int m = static_cast<int>(nu.blocks.size());
  std::int64_t total = 0;
  for (const IntVec& omega : set_partitions(m)) {
    const int parts = m == 0 ? 0 : *std::max_element(omega.begin(), omega.end()) + 1;
    bool ok = true;
    for (int a = 0; a < m && ok; ++a)
      for (int b = a + 1; b < m && ok; ++b)
        if (omega[a] == omega[b] && !disjoint(nu.blocks[a], nu.blocks[b])) ok = false;
    if (!ok) continue;
    std::int64_t term = static_cast<std::int64_t>(detail::factorial_u64(std::max(parts - 1, 0)));
    total += ((parts - 1) % 2 == 0) ? term : -term;
  }
  return total;
}

DiagSlice power_to_cumulant_slice(const IntVec& lambda,
                                  const std::function<const DiagSlice&(const IntVec&)>& power_slice) {
  const int b = static_cast<int>(lambda.size());
  if (b == 0) throw InvalidArgument("empty slice pattern");
  struct Factor {
    const DiagSlice* slice;
    IntVec positions;  // slice axis q reads index position positions[q]
  };
  struct Term {
    double coef;
    std::vector<Factor> factors;
  };
  std::vector<Term> terms;
  int dim = -1;
  for (const VecPartition& nu : enumerate_vec_partitions(lambda, false, 0)) {
    const double coef = static_cast<double>(c_vec(nu, lambda)) * static_cast<double>(c_power(nu));
    if (coef == 0.0) continue;
    Term term{coef, {}};
    for (const IntVec& u : nu.blocks) {
      IntVec positions;
      for (int p = 0; p < b; ++p)
        if (u[p] != 0) positions.push_back(p);
      std::stable_sort(positions.begin(), positions.end(), [&](int x, int y) { return u[x] > u[y]; });
      IntVec alpha;
      for (int p : positions) alpha.push_back(u[p]);
      const DiagSlice& s = power_slice(alpha);
      if (s.pattern != alpha) throw InvalidArgument("power slice provider returned the wrong pattern");
      if (dim < 0) dim = s.dim;
      term.factors.push_back(Factor{&s, positions});
    }
    terms.push_back(std::move(term));
  }
  DiagSlice out(lambda, dim);
  IntVec idx(b, 0), sub;
  std::size_t f = 0;
  do {
    if (detail::all_distinct(idx)) {
      double acc = 0.0;
      for (const Term& t : terms) {
        double v = t.coef;
        for (const Factor& fac : t.factors) {
          sub.resize(fac.positions.size());
          for (std::size_t q = 0; q < fac.positions.size(); ++q) sub[q] = idx[fac.positions[q]];
          v *= fac.slice->at(sub);
        }
        acc += v;
      }
      out.data[f] = acc;
    }
    ++f;
  } while (detail::next_index(idx, dim));
  return out;
}

double joint_cumulant(std::span<const int> vars, const std::function<double(std::span<const int>)>& moment) {
  const int m = static_cast<int>(vars.size());
  if (m == 0) return 0.0;
  double total = 0.0;
  std::vector<int> block;
  for (const IntVec& pi : set_partitions(m)) {
    const int parts = *std::max_element(pi.begin(), pi.end()) + 1;
    double prod = detail::factorial(parts - 1) * ((parts - 1) % 2 == 0 ? 1.0 : -1.0);
    for (int p = 0; p < parts; ++p) {
      block.clear();
      for (int a = 0; a < m; ++a)
        if (pi[a] == p) block.push_back(vars[a]);
      prod *= moment(block);
    }
    total += prod;
  }
  return total;
}

}  // namespace kprop
