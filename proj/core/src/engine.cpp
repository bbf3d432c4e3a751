#include "engine.hpp"

#include "kprop/errors.hpp"
#include "util.hpp"

#include <cmath>
#include <mutex>
#include <numeric>

namespace kprop::detail {

namespace {

// Every k in Z^vars with |k| <= kmax; all entries positive when vars >= 2.
void orders_rec(int vars, int pos, int remaining, IntVec& cur, std::vector<IntVec>& out) {
  if (pos == vars) {
    out.push_back(cur);
    return;
  }
  const int lo = vars >= 2 ? 1 : 0;
  for (int v = lo; v <= remaining; ++v) {
    cur[pos] = v;
    orders_rec(vars, pos + 1, remaining - v, cur, out);
  }
}

struct Prepared {
  double coef;
  std::vector<std::pair<const Eigen::VectorXd*, int>> hermite;  // coefficient vector, index position
  std::vector<std::pair<const DiagSlice*, IntVec>> slices;      // slice, index positions
};

DiagSlice evaluate(const IntVec& pattern, int n, const std::vector<Prepared>& terms) {
  const int b = static_cast<int>(pattern.size());
  DiagSlice out(pattern, n);
  if (terms.empty()) return out;
  IntVec idx(b, 0), sub;
  std::size_t f = 0;
  do {
    if (all_distinct(idx)) {
      double acc = 0.0;
      for (const Prepared& t : terms) {
        double v = t.coef;
        for (const auto& [h, p] : t.hermite) v *= (*h)[idx[p]];
        for (const auto& [s, pos] : t.slices) {
          sub.resize(pos.size());
          for (std::size_t q = 0; q < pos.size(); ++q) sub[q] = idx[pos[q]];
          v *= s->at(sub);
        }
        acc += v;
      }
      out.data[f] = acc;
    }
    ++f;
  } while (next_index(idx, n));
  return out;
}

}  // namespace

HermiteTable::HermiteTable(const Activation& act, int pmax, int kmax, const Eigen::VectorXd& mu,
                           const Eigen::VectorXd& var, int nodes)
    : kmax_(kmax) {
  const Eigen::Index n = mu.size();
  table_.assign(static_cast<std::size_t>(pmax) * (kmax + 1), Eigen::VectorXd(n));
  for (int p = 1; p <= pmax; ++p)
    for (int k = 0; k <= kmax; ++k) {
      auto& v = table_[(p - 1) * (kmax + 1) + k];
      for (Eigen::Index i = 0; i < n; ++i) v[i] = hermite_coeff(act, p, k, mu[i], var[i], nodes);
    }
}

const DiagSlice* PreActivationSlices::get(const IntVec& pattern) {
  auto it = cache_.find(pattern);
  if (it == cache_.end()) it = cache_.emplace(pattern, source_(pattern)).first;
  return it->second ? &*it->second : nullptr;
}

PreActivationSlices::Source dense_source(const TrackingSchedule& sched, const std::map<int, SymTensor>& t,
                                         const Eigen::MatrixXd& m) {
  return [&sched, &t, &m](const IntVec& pattern) -> std::optional<DiagSlice> {
    const int r = std::accumulate(pattern.begin(), pattern.end(), 0);
    const int s = sched.cutoff(r);
    auto it = t.find(r);
    if (s == kUntracked || it == t.end()) return std::nullopt;
    return slice_of_cup(it->second, m, pattern, s);
  };
}

const std::vector<DiagramTerm>& diagram_terms(int vars, int K) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<DiagramTerm>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(vars, K);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<IntVec> orders;
  IntVec cur(vars, 0);
  orders_rec(vars, 0, 2 * K - 1, cur, orders);
  std::vector<DiagramTerm> terms;
  for (const IntVec& k : orders) {
    double kfact = 1.0;
    for (int v : k) kfact *= factorial(v);
    for (const VecPartition& nu : enumerate_vec_partitions(k, true, 2, K)) {
      terms.push_back({static_cast<double>(c_vec(nu, k)) / kfact, k, nu.blocks});
    }
  }
  return cache.emplace(key, std::move(terms)).first->second;
}

DiagSlice power_cumulant(const IntVec& alpha, const HermiteTable& h, PreActivationSlices& pre, int K, int n) {
  const int b = static_cast<int>(alpha.size());
  std::vector<Prepared> prepared;
  for (const DiagramTerm& t : diagram_terms(b, K)) {
    Prepared p{t.coef, {}, {}};
    bool zero = false;
    for (const IntVec& u : t.blocks) {
      IntVec pattern, pos;
      for (int a = 0; a < b; ++a)
        if (u[a] != 0) {
          pattern.push_back(u[a]);
          pos.push_back(a);
        }
      const DiagSlice* s = pre.get(pattern);
      if (!s) {
        zero = true;
        break;
      }
      p.slices.emplace_back(s, std::move(pos));
    }
    if (zero) continue;
    for (int a = 0; a < b; ++a) p.hermite.emplace_back(&h(alpha[a], t.k[a]), a);
    prepared.push_back(std::move(p));
  }
  return evaluate(alpha, n, prepared);
}

DiagSlice ablated_cumulant(const IntVec& lambda, const HermiteTable& h, PreActivationSlices& pre, int K, int n) {
  const int b = static_cast<int>(lambda.size());
  IntVec block_of;
  for (int j = 0; j < b; ++j)
    for (int q = 0; q < lambda[j]; ++q) block_of.push_back(j);
  const int r = static_cast<int>(block_of.size());
  std::vector<Prepared> prepared;
  for (const DiagramTerm& t : diagram_terms(r, K)) {
    Prepared p{t.coef, {}, {}};
    bool zero = false;
    for (const IntVec& u : t.blocks) {
      IntVec merged(b, 0);
      for (int q = 0; q < r; ++q) merged[block_of[q]] += u[q];
      IntVec pattern, pos;
      for (int j = 0; j < b; ++j)
        if (merged[j] != 0) {
          pattern.push_back(merged[j]);
          pos.push_back(j);
        }
      const DiagSlice* s = pre.get(pattern);
      if (!s) {
        zero = true;
        break;
      }
      p.slices.emplace_back(s, std::move(pos));
    }
    if (zero) continue;
    for (int q = 0; q < r; ++q) p.hermite.emplace_back(&h(1, t.k[q]), block_of[q]);
    prepared.push_back(std::move(p));
  }
  return evaluate(lambda, n, prepared);
}

std::vector<IntVec> partitions_with_traces(int r, int s) {
  std::vector<IntVec> out;
  for (IntVec& lam : integer_partitions(r)) {
    int pairs = 0;
    for (int v : lam) pairs += v / 2;
    if (pairs >= s) out.push_back(std::move(lam));
  }
  return out;
}

SymTensor project_slices(int r, int n, int s, std::span<const DiagSlice> slices) {
  if (s == 0) return embed_slices(slices, r, n, true);
  return harmonic_projection(r, n, s, [&](int m) {
    SymTensor acc(r - 2 * m, n);
    for (const DiagSlice& sl : slices) acc += trace_of_diagonal(sl, m);
    return acc;
  });
}

Eigen::VectorXd floored_variance(const DiagSlice* diag2, int n, double floor, CumulantState& state) {
  Eigen::VectorXd var(n);
  for (int i = 0; i < n; ++i) {
    double v = diag2 ? diag2->data[i] : 0.0;
    if (!std::isfinite(v)) throw NumericalError("propagated variance is not finite");
    if (v < floor) {
      if (v < 0.0) ++state.negative_variances;
      ++state.clamped_variances;
      v = floor;
    }
    var[i] = v;
  }
  return var;
}

}  // namespace kprop::detail
