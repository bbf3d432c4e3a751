#include "kprop/flopcount.hpp"

#include "engine.hpp"
#include "kprop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace kprop {

namespace {

// Cost of one Hermite coefficient: closed forms are a fixed handful of special-function
// calls; quadrature kinds evaluate act^p and He_k at every node.
constexpr double kClosedFormCost = 30.0;
constexpr double kQuadratureCostPerNode = 8.0;

double binomial(double top, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r *= (top - k + i) / i;
  return r;
}

double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

// Ordered tuples of b pairwise distinct indices.
double distinct(int n, int b) {
  double r = 1.0;
  for (int i = 0; i < b; ++i) r *= n - i;
  return r;
}

double hermite_cost(const Activation& act, int nodes) {
  switch (act.kind) {
    case ActKind::gelu:
    case ActKind::tanh: return kQuadratureCostPerNode * nodes;
    default: return kClosedFormCost;
  }
}

int order_of(const IntVec& pattern) { return std::accumulate(pattern.begin(), pattern.end(), 0); }

// Compact patterns of the pre-activation slices a diagram term reads.
std::vector<IntVec> term_patterns(const detail::DiagramTerm& t, const IntVec& block_of, int groups) {
  std::vector<IntVec> out;
  for (const IntVec& u : t.blocks) {
    IntVec merged(groups, 0);
    for (std::size_t q = 0; q < u.size(); ++q) merged[block_of[q]] += u[q];
    IntVec pattern;
    for (int v : merged)
      if (v != 0) pattern.push_back(v);
    out.push_back(std::move(pattern));
  }
  return out;
}

IntVec identity_blocks(int b) {
  IntVec v(b);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Accumulates the cost of one nonlinear step and records the slices it reads.
struct StepCounter {
  int n;
  int K;
  const TrackingSchedule& sched;
  FlopLedger ledger;
  std::set<IntVec> patterns;

  bool readable(const IntVec& pattern) const {
    const int r = order_of(pattern);
    return r >= 2 && sched.tracked(r);
  }

  // Diagram sum over `block_of.size()` copies grouped into `groups` output indices.
  void diagram_sum(const IntVec& block_of, int groups) {
    double per_entry = 0.0;
    const int vars = static_cast<int>(block_of.size());
    for (const detail::DiagramTerm& t : detail::diagram_terms(vars, K)) {
      const auto pats = term_patterns(t, block_of, groups);
      if (!std::all_of(pats.begin(), pats.end(), [&](const IntVec& p) { return readable(p); })) continue;
      patterns.insert(pats.begin(), pats.end());
      per_entry += vars + static_cast<double>(pats.size()) + 1.0;
    }
    ledger.elementwise += distinct(n, groups) * per_entry;
  }

  void power(const IntVec& alpha) {
    const int b = static_cast<int>(alpha.size());
    diagram_sum(identity_blocks(b), b);
  }

  void ablated(const IntVec& lambda) {
    IntVec block_of;
    for (std::size_t j = 0; j < lambda.size(); ++j)
      for (int q = 0; q < lambda[j]; ++q) block_of.push_back(static_cast<int>(j));
    diagram_sum(block_of, static_cast<int>(lambda.size()));
  }

  void cumulant(const IntVec& lambda) {
    double per_entry = 0.0;
    for (const VecPartition& nu : enumerate_vec_partitions(lambda, false, 0))
      if (c_power(nu) != 0) per_entry += static_cast<double>(nu.blocks.size()) + 1.0;
    ledger.elementwise += distinct(n, static_cast<int>(lambda.size())) * per_entry;
  }

  void project(int r, int s, const std::vector<IntVec>& lambdas) {
    if (s == 0) {
      ledger.elementwise += binomial(n + r - 1, r);
      return;
    }
    for (const IntVec& lam : lambdas) {
      const int b = static_cast<int>(lam.size());
      for (int m = s; m <= r / 2; ++m)
        ledger.elementwise += 2.0 * distinct(n, b) * static_cast<double>(multigraphs(b, m).size());
    }
    const int rank = r - 2 * s;
    for (int m = s; m <= r / 2; ++m) ledger.elementwise += 2.0 * ipow(n, rank) * (m - s + 1);
  }

  // slice_of_cup over every requested pattern.
  void slices_of_cup() {
    for (const IntVec& u : patterns) {
      const int s = sched.cutoff(order_of(u));
      double per_entry = 0.0;
      for (const Multigraph& g : multigraphs(static_cast<int>(u.size()), s))
        if (delta_cup_coefficient(u, g) != 0.0) per_entry += static_cast<double>(g.size()) + 2.0;
      ledger.elementwise += distinct(n, static_cast<int>(u.size())) * per_entry;
    }
  }
};

// Power slices the cumulant conversion reads for one lambda.
std::set<IntVec> requested_powers(const IntVec& lambda) {
  std::set<IntVec> seen;
  std::map<IntVec, DiagSlice> store;
  power_to_cumulant_slice(lambda, [&](const IntVec& alpha) -> const DiagSlice& {
    seen.insert(alpha);
    auto it = store.find(alpha);
    if (it == store.end()) it = store.emplace(alpha, DiagSlice(alpha, 1)).first;
    return it->second;
  });
  return seen;
}

double contract_cost(int n, int d) {
  if (d == 0) return 0.0;
  return 2.0 * d * ipow(n, d + 1) * adjustment_beta(n, d);
}

bool needs_m(const TrackingSchedule& sched) {
  return sched.K == 1 || std::any_of(sched.s.begin() + 1, sched.s.end(), [](int c) { return c > 0; });
}

double m_cost(int n, const TrackingSchedule& sched) {
  if (sched.K == 1) return 2.0 * n * n;
  return needs_m(sched) ? 2.0 * n * binomial(n + 1, 2) : 0.0;
}

FlopLedger dense_flops(const NetworkSpec& spec, const EstimatorConfig& config) {
  const int n = spec.width;
  const int K = config.K;
  const TrackingSchedule sched = TrackingSchedule::make(K, config.variant);
  const bool ablated = config.variant == Variant::ablated;
  const int R = sched.max_rank();
  const int kmax = sched.hermite_order_cap();
  FlopLedger total;

  std::vector<int> ranks;
  for (int r = 2; r <= R; ++r)
    if (sched.tracked(r)) ranks.push_back(r - 2 * sched.cutoff(r));

  auto linear = [&](FlopLedger& led) {
    for (int d : ranks) led.contract += contract_cost(n, d);
    led.einsum += m_cost(n, sched);
  };

  for (int l = 0; l < spec.hidden_layers; ++l) {
    StepCounter c{n, K, sched, {}, {}};
    c.ledger.contract += 2.0 * n * n;
    if (spec.use_bias) c.ledger.elementwise += n;
    linear(c.ledger);
    if (sched.tracked(2)) c.patterns.insert(IntVec{2});
    const int pmax = ablated ? 1 : R;
    c.ledger.hermite += pmax * (kmax + 1.0) * n * hermite_cost(spec.activations[l], config.quadrature_nodes);

    std::set<IntVec> powers{IntVec{1}};
    for (int r = 2; r <= R; ++r) {
      if (!sched.tracked(r)) continue;
      const int s = sched.cutoff(r);
      const auto lambdas = detail::partitions_with_traces(r, s);
      for (const IntVec& lam : lambdas) {
        if (ablated) {
          c.ablated(lam);
        } else {
          c.cumulant(lam);
          const auto req = requested_powers(lam);
          powers.insert(req.begin(), req.end());
        }
      }
      c.project(r, s, lambdas);
    }
    if (ablated) c.ablated(IntVec{1});
    else
      for (const IntVec& alpha : powers) c.power(alpha);
    c.slices_of_cup();
    total += c.ledger;
  }

  FlopLedger out;
  out.contract += 2.0 * n * n;
  if (spec.use_bias) out.elementwise += n;
  if (spec.final_activation) {
    StepCounter c{n, K, sched, {}, {}};
    linear(c.ledger);
    if (sched.tracked(2)) c.patterns.insert(IntVec{2});
    c.ledger.hermite += (kmax + 1.0) * n * hermite_cost(*spec.final_activation, config.quadrature_nodes);
    c.power(IntVec{1});
    c.slices_of_cup();
    out += c.ledger;
  }
  total += out;
  return total;
}

// Factored rank-3 products on n x J factors.
double f3_contract_cost(int n, double j) { return 6.0 * n * n * j; }
double f3_diag3_cost(int n, double j) { return 3.0 * n * j; }
double f3_diag21_cost(int n, double j) { return 6.0 * n * n * j + 3.0 * n * j + 3.0 * n * n; }

FlopLedger factorized_flops(const NetworkSpec& spec, const EstimatorConfig& config) {
  const int n = spec.width;
  constexpr int K = 3;
  const TrackingSchedule sched = TrackingSchedule::make(K, Variant::factorized);
  const int kmax = sched.hermite_order_cap();
  FlopLedger total;

  // Slices read from the rank-2 and scalar rank-4 channels; rank-3 ones come from factors.
  auto dense_part = [&](StepCounter& c) {
    std::set<IntVec> keep;
    for (const IntVec& u : c.patterns)
      if (order_of(u) != 3) keep.insert(u);
    std::set<IntVec> all = std::move(c.patterns);
    c.patterns = std::move(keep);
    c.slices_of_cup();
    return all;
  };

  double j = 0.0;
  for (int l = 0; l < spec.hidden_layers; ++l) {
    StepCounter c{n, K, sched, {}, {}};
    c.ledger.contract += 2.0 * n * n + contract_cost(n, 2);
    if (spec.use_bias) c.ledger.elementwise += n;
    c.ledger.einsum += f3_contract_cost(n, j) + m_cost(n, sched);
    c.ledger.hermite += sched.max_rank() * (kmax + 1.0) * n * hermite_cost(spec.activations[l], config.quadrature_nodes);
    c.patterns.insert(IntVec{2});

    std::set<IntVec> powers{IntVec{1}};
    const std::vector<IntVec> lambdas{{2}, {1, 1}, {4}, {2, 2}, {3}, {2, 1}};
    for (const IntVec& lam : lambdas) {
      c.cumulant(lam);
      const auto req = requested_powers(lam);
      powers.insert(req.begin(), req.end());
    }
    c.project(2, 0, {{2}, {1, 1}});
    c.project(4, 2, {{4}, {2, 2}});
    for (const IntVec& alpha : powers) c.power(alpha);
    const auto read = dense_part(c);
    if (read.count(IntVec{3})) c.ledger.einsum += f3_diag3_cost(n, j);
    if (read.count(IntVec{2, 1}) || read.count(IntVec{1, 2})) c.ledger.einsum += f3_diag21_cost(n, j);

    // New factors: scaled pass-through, legs, diagonal corrections and their embeddings.
    const double jn = j + n;
    c.ledger.elementwise += 3.0 * n * j + n * n + n;
    c.ledger.einsum += f3_diag3_cost(n, jn) + f3_diag21_cost(n, jn);
    c.ledger.elementwise += n + n * (n - 1.0) + n * n;
    j += 3.0 * n;
    total += c.ledger;
  }

  FlopLedger out;
  out.contract += 2.0 * n * n;
  if (spec.use_bias) out.elementwise += n;
  if (spec.final_activation) {
    StepCounter c{n, K, sched, {}, {}};
    c.ledger.contract += contract_cost(n, 2);
    c.ledger.einsum += f3_contract_cost(n, j) + m_cost(n, sched);
    c.patterns.insert(IntVec{2});
    c.ledger.hermite += (kmax + 1.0) * n * hermite_cost(*spec.final_activation, config.quadrature_nodes);
    c.power(IntVec{1});
    const auto read = dense_part(c);
    if (read.count(IntVec{3})) c.ledger.einsum += f3_diag3_cost(n, j);
    out += c.ledger;
  }
  total += out;
  return total;
}

}  // namespace

FlopLedger& FlopLedger::operator+=(const FlopLedger& o) {
  contract += o.contract;
  einsum += o.einsum;
  elementwise += o.elementwise;
  hermite += o.hermite;
  return *this;
}

double adjustment_alpha(int n, int d) {
  if (n < 1 || d < 0) throw InvalidArgument("adjustment_alpha needs n >= 1 and d >= 0");
  return binomial(n + d - 1, d) / ipow(n, d);
}

double adjustment_alpha(int n, const IntVec& lambda) {
  if (n < 1) throw InvalidArgument("adjustment_alpha needs n >= 1");
  std::map<int, int> counts;
  for (int v : lambda) {
    if (v < 1) throw InvalidArgument("partition parts must be positive");
    ++counts[v];
  }
  double r = 1.0;
  for (const auto& [part, c] : counts) r *= binomial(n + c - 1, c) / ipow(n, c);
  return r;
}

double adjustment_beta(int n, int d) {
  if (n < 1 || d < 1) throw InvalidArgument("adjustment_beta needs n >= 1 and d >= 1");
  double acc = 0.0;
  for (int i = 1; i <= d; ++i) acc += binomial(n + i - 1, i) * binomial(n + d - i - 1, d - i);
  return acc / (d * ipow(n, d));
}

double adjustment_beta_limit(int d) {
  if (d < 1) throw InvalidArgument("adjustment_beta_limit needs d >= 1");
  double acc = 0.0;
  for (int i = 1; i <= d; ++i) acc += 1.0 / (std::tgamma(i + 1.0) * std::tgamma(d - i + 1.0));
  return acc / d;
}

double flops_mc(int n, int layers, std::uint64_t samples) {
  return static_cast<double>(samples) * (2.0 * n * n * (layers + 1) + static_cast<double>(n) * layers);
}

double flops_mc(const NetworkSpec& spec, std::uint64_t samples) {
  const double n = spec.width;
  double per = 2.0 * n * n * (spec.hidden_layers + 1) + n * spec.hidden_layers;
  if (spec.use_bias) per += n * (spec.hidden_layers + 1);
  if (spec.final_activation) per += n;
  return static_cast<double>(samples) * per;
}

FlopLedger estimator_flops(const NetworkSpec& spec, const EstimatorConfig& config) {
  if (config.variant == Variant::factorized) {
    if (config.K == 3) return factorized_flops(spec, config);
    if (config.K > 3) throw Unimplemented("factorized propagation is implemented for K <= 3");
    EstimatorConfig basic = config;
    basic.variant = Variant::basic;
    return dense_flops(spec, basic);
  }
  return dense_flops(spec, config);
}

double flops_estimator(const NetworkSpec& spec, const EstimatorConfig& config) {
  return estimator_flops(spec, config).total();
}

double flops_estimator(const EstimatorConfig& config, int n, int layers) {
  return flops_estimator(NetworkSpec::uniform(layers, n, Activation::relu()), config);
}

std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  if (x.size() != y.size() || static_cast<int>(x.size()) <= degree || degree < 0)
    throw InvalidArgument("polyfit needs more points than the degree");
  const double scale = *std::max_element(x.begin(), x.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  const double sx = scale == 0.0 ? 1.0 : std::abs(scale);
  Eigen::MatrixXd v(x.size(), degree + 1);
  Eigen::VectorXd rhs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int k = 0; k <= degree; ++k) v(i, k) = std::pow(x[i] / sx, k);
    rhs[i] = y[i];
  }
  const Eigen::VectorXd c = v.colPivHouseholderQr().solve(rhs);
  std::vector<double> out(degree + 1);
  for (int k = 0; k <= degree; ++k) out[k] = c[k] / std::pow(sx, k);
  return out;
}

double polyval(const std::vector<double>& coef, double x) {
  double acc = 0.0;
  for (auto it = coef.rbegin(); it != coef.rend(); ++it) acc = acc * x + *it;
  return acc;
}

double flops_leading_coefficient(const EstimatorConfig& config) {
  const bool factored = config.variant == Variant::factorized && config.K == 3;
  const int degree = factored ? 3 : config.K + 1;
  constexpr int base = 4;
  std::vector<double> xs, ys;
  for (int i = 1; i <= degree + 3; ++i) {
    const int n = 8 * i;
    const double f0 = flops_estimator(config, n, base);
    const double f1 = flops_estimator(config, n, base + 1);
    double d = f1 - f0;
    if (factored) d = (flops_estimator(config, n, base + 2) - f1 - d) / 2.0;
    xs.push_back(n);
    ys.push_back(d);
  }
  return polyfit(xs, ys, degree).back();
}

}  // namespace kprop
