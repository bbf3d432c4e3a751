#pragma once

#include "kprop/hermite.hpp"
#include "kprop/network.hpp"
#include "kprop/symtensor.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace kprop {

enum class Variant { basic, augmented, ablated, factorized };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

inline constexpr int kMaxOrder = 4;
inline constexpr int kUntracked = -1;

// Harmonic cutoff s(r) per cumulant order. Order r is tracked as a tensor of
// rank r - 2 s(r); kUntracked marks orders that are dropped.
struct TrackingSchedule {
  int K = 1;
  Variant variant = Variant::basic;
  std::vector<int> s;  // indexed by r = 0..R

  static TrackingSchedule make(int K, Variant variant);
  int max_rank() const { return static_cast<int>(s.size()) - 1; }
  int cutoff(int r) const { return r >= 1 && r <= max_rank() ? s[r] : kUntracked; }
  bool tracked(int r) const { return cutoff(r) != kUntracked; }
  int hermite_order_cap() const { return 2 * K - 1; }
  int weight_cap() const { return K; }
};

struct EstimatorConfig {
  int K = 2;
  Variant variant = Variant::basic;
  int quadrature_nodes = kDefaultQuadratureNodes;
  double variance_floor = kSigma2Min;
};

// Tracked state of the last hidden layer's activations (the input when L = 0):
// `mean` is eta_1, `variance` the per-neuron variance implied by eta_2, and
// `eta` the tracked tensor per order r >= 2.
struct CumulantState {
  int layer = 0;
  TrackingSchedule schedule;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::map<int, SymTensor> eta;
  // Pre-activation variances that fell below the floor, summed over layers.
  int clamped_variances = 0;
  int negative_variances = 0;
};

struct PropagationResult {
  Eigen::VectorXd estimate;
  CumulantState state;
};

// Sample-free estimate of E[M(X)], X ~ N(0, I). Networks with a final
// activation return the estimated E[final(Z)] of the output pre-activation Z.
// Variant::factorized dispatches to the factored K=3 pipeline and equals basic for K <= 2.
PropagationResult propagate(const NetworkSpec& spec, const Weights& weights, const EstimatorConfig& config);

Eigen::VectorXd propagate_ablated(const NetworkSpec& spec, const Weights& weights, int K);

// Mean propagation: mean vector and a scalar average variance.
Eigen::VectorXd mean_prop(const NetworkSpec& spec, const Weights& weights);
// Covariance propagation: mean vector and full covariance matrix.
Eigen::VectorXd cov_prop(const NetworkSpec& spec, const Weights& weights);

// Means, variances and per-order Frobenius norms as a JSON document.
std::string state_to_json(const CumulantState& state);

}  // namespace kprop
