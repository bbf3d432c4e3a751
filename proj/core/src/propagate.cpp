#include "kprop/propagate.hpp"

#include "engine.hpp"
#include "kprop/errors.hpp"
#include "kprop/factorized.hpp"

#include <json.hpp>

#include <algorithm>

namespace kprop {

namespace {

Eigen::VectorXd add_bias(Eigen::VectorXd v, const Weights& w, std::size_t layer) {
  if (w.has_bias()) v += w.b[layer];
  return v;
}

// E[act(Y)] per neuron, or the plain mean when there is no activation.
Eigen::VectorXd final_mean(const NetworkSpec& spec, const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
                           int nodes) {
  if (!spec.final_activation) return mu;
  Eigen::VectorXd out(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    out[i] = hermite_coeff(*spec.final_activation, 1, 0, mu[i], var[i], nodes);
  return out;
}

// Per-neuron variance of the tracked post-activation state; a scalar eta_2 is the averaged variance.
Eigen::VectorXd hidden_variance(const std::map<int, SymTensor>& eta, int n) {
  auto it = eta.find(2);
  if (it == eta.end()) return Eigen::VectorXd::Ones(n);
  if (it->second.rank() == 2) return it->second.to_matrix().diagonal();
  return Eigen::VectorXd::Constant(n, it->second[0]);
}

double floor_one(double v, double floor, CumulantState& state) {
  if (!std::isfinite(v)) throw NumericalError("propagated variance is not finite");
  if (v < floor) {
    if (v < 0.0) ++state.negative_variances;
    ++state.clamped_variances;
    return floor;
  }
  return v;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::basic: return "basic";
    case Variant::augmented: return "augmented";
    case Variant::ablated: return "ablated";
    case Variant::factorized: return "factorized";
  }
  return "basic";
}

Variant parse_variant(const std::string& s) {
  if (s == "basic") return Variant::basic;
  if (s == "augmented") return Variant::augmented;
  if (s == "ablated") return Variant::ablated;
  if (s == "factorized") return Variant::factorized;
  throw ConfigError("unknown variant: " + s);
}

TrackingSchedule TrackingSchedule::make(int K, Variant variant) {
  if (K < 1 || K > kMaxOrder) throw InvalidArgument("K must be in 1.." + std::to_string(kMaxOrder));
  TrackingSchedule t;
  t.K = K;
  t.variant = variant;
  t.s.assign(K + 1, 0);
  t.s[0] = kUntracked;
  switch (variant) {
    case Variant::basic:
    case Variant::factorized:
      if ((K + 1) % 2 == 0) t.s.push_back((K + 1) / 2);
      break;
    case Variant::augmented:
      t.s.push_back(1);
      if ((K + 2) % 2 == 0) t.s.push_back((K + 2) / 2);
      break;
    case Variant::ablated:
      break;
  }
  return t;
}

PropagationResult propagate(const NetworkSpec& spec, const Weights& weights, const EstimatorConfig& config) {
  spec.validate();
  weights.check(spec);
  if (config.variant == Variant::factorized) return propagate_factorized(spec, weights, config);

  const int n = spec.width;
  const int K = config.K;
  const int L = spec.hidden_layers;
  const bool ablated = config.variant == Variant::ablated;
  const TrackingSchedule sched = TrackingSchedule::make(K, config.variant);
  const int R = sched.max_rank();
  const int kmax = sched.hermite_order_cap();

  PropagationResult res;
  CumulantState& st = res.state;
  st.schedule = sched;

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  std::map<int, SymTensor> eta;
  for (int r = 2; r <= R; ++r) {
    if (!sched.tracked(r)) continue;
    const int rank = r - 2 * sched.cutoff(r);
    if (r == 2) eta[r] = rank == 0 ? SymTensor::scalar(1.0, n) : SymTensor::identity(n);
    else eta[r] = SymTensor(rank, n);
  }

  const bool need_m = K == 1 || std::any_of(sched.s.begin() + 1, sched.s.end(), [](int c) { return c > 0; });
  auto record_state = [&](int layer) {
    st.layer = layer;
    st.mean = mu;
    st.variance = hidden_variance(eta, n);
    st.eta = eta;
  };

  for (int l = 0; l <= L; ++l) {
    const Eigen::MatrixXd& w = weights.w[l];
    const bool last = l == L;
    if (last) record_state(L);
    mu = add_bias(w * mu, weights, l);
    if (last && !spec.final_activation) {
      res.estimate = mu;
      return res;
    }

    std::map<int, SymTensor> t;
    for (const auto& [r, e] : eta) t[r] = symmetric_contract(e, w);
    Eigen::MatrixXd m;
    if (K == 1) m = w.rowwise().squaredNorm().asDiagonal();
    else if (need_m) m = w * w.transpose();
    detail::PreActivationSlices pre(detail::dense_source(sched, t, m));
    const Eigen::VectorXd var = sched.tracked(2)
                                    ? detail::floored_variance(pre.get(IntVec{2}), n, config.variance_floor, st)
                                    : Eigen::VectorXd::Ones(n);

    if (last) {
      const detail::HermiteTable h(*spec.final_activation, 1, kmax, mu, var, config.quadrature_nodes);
      res.estimate = Eigen::Map<const Eigen::VectorXd>(detail::power_cumulant(IntVec{1}, h, pre, K, n).data.data(), n);
      return res;
    }

    const detail::HermiteTable h(spec.activations[l], ablated ? 1 : R, kmax, mu, var, config.quadrature_nodes);
    std::map<IntVec, DiagSlice> power;
    auto power_slice = [&](const IntVec& alpha) -> const DiagSlice& {
      auto it = power.find(alpha);
      if (it == power.end()) it = power.emplace(alpha, detail::power_cumulant(alpha, h, pre, K, n)).first;
      return it->second;
    };

    const DiagSlice& m1 = power_slice(IntVec{1});
    Eigen::VectorXd next_mu = Eigen::Map<const Eigen::VectorXd>(m1.data.data(), n);
    std::map<int, SymTensor> next;
    for (int r = 2; r <= R; ++r) {
      if (!sched.tracked(r)) continue;
      const int s = sched.cutoff(r);
      std::vector<DiagSlice> slices;
      for (const IntVec& lam : detail::partitions_with_traces(r, s))
        slices.push_back(ablated ? detail::ablated_cumulant(lam, h, pre, K, n)
                                 : power_to_cumulant_slice(lam, power_slice));
      next[r] = detail::project_slices(r, n, s, slices);
    }
    mu = std::move(next_mu);
    eta = std::move(next);
  }
  return res;
}

Eigen::VectorXd propagate_ablated(const NetworkSpec& spec, const Weights& weights, int K) {
  EstimatorConfig cfg;
  cfg.K = K;
  cfg.variant = Variant::ablated;
  return propagate(spec, weights, cfg).estimate;
}

Eigen::VectorXd mean_prop(const NetworkSpec& spec, const Weights& weights) {
  spec.validate();
  weights.check(spec);
  const int n = spec.width;
  CumulantState diag;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  double sigma2_mean = 1.0;
  for (int l = 0; l <= spec.hidden_layers; ++l) {
    const Eigen::MatrixXd& w = weights.w[l];
    mu = add_bias(w * mu, weights, l);
    Eigen::VectorXd var = sigma2_mean * w.rowwise().squaredNorm();
    for (int i = 0; i < n; ++i) var[i] = floor_one(var[i], kSigma2Min, diag);
    if (l == spec.hidden_layers) return final_mean(spec, mu, var, kDefaultQuadratureNodes);
    const Activation& act = spec.activations[l];
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double a = gaussian_moment(act, 1, mu[i], var[i]);
      const double b = gaussian_moment(act, 2, mu[i], var[i]);
      mu[i] = a;
      acc += b - a * a;
    }
    sigma2_mean = acc / n;
  }
  return mu;
}

Eigen::VectorXd cov_prop(const NetworkSpec& spec, const Weights& weights) {
  spec.validate();
  weights.check(spec);
  const int n = spec.width;
  CumulantState diag;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(n, n);
  for (int l = 0; l <= spec.hidden_layers; ++l) {
    const Eigen::MatrixXd& w = weights.w[l];
    mu = add_bias(w * mu, weights, l);
    sigma = w * sigma * w.transpose();
    Eigen::VectorXd var(n);
    for (int i = 0; i < n; ++i) var[i] = floor_one(sigma(i, i), kSigma2Min, diag);
    if (l == spec.hidden_layers) return final_mean(spec, mu, var, kDefaultQuadratureNodes);
    const Activation& act = spec.activations[l];
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) {
      const double a = gaussian_moment(act, 1, mu[i], var[i]);
      const double b = gaussian_moment(act, 2, mu[i], var[i]);
      c[i] = hermite_coeff(act, 1, 1, mu[i], var[i]);
      mu[i] = a;
      sigma(i, i) = b - a * a;
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) sigma(i, j) *= c[i] * c[j];
  }
  return mu;
}

std::string state_to_json(const CumulantState& state) {
  nlohmann::json j;
  j["layer"] = state.layer;
  j["K"] = state.schedule.K;
  j["variant"] = to_string(state.schedule.variant);
  j["cutoffs"] = state.schedule.s;
  j["mean"] = std::vector<double>(state.mean.data(), state.mean.data() + state.mean.size());
  j["variance"] = std::vector<double>(state.variance.data(), state.variance.data() + state.variance.size());
  nlohmann::json orders = nlohmann::json::array();
  for (const auto& [r, e] : state.eta)
    orders.push_back({{"order", r}, {"rank", e.rank()}, {"frobenius", e.frobenius_norm()}});
  j["orders"] = orders;
  j["clampedVariances"] = state.clamped_variances;
  j["negativeVariances"] = state.negative_variances;
  return j.dump(2);
}

}  // namespace kprop
