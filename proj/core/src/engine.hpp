#pragma once

#include "kprop/combinat.hpp"
#include "kprop/hermite.hpp"
#include "kprop/propagate.hpp"
#include "kprop/symtensor.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace kprop::detail {

// Hermite coefficients of act^p at every neuron, for p = 1..pmax and k = 0..kmax.
class HermiteTable {
public:
  HermiteTable(const Activation& act, int pmax, int kmax, const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
               int nodes);
  const Eigen::VectorXd& operator()(int p, int k) const { return table_[(p - 1) * (kmax_ + 1) + k]; }

private:
  int kmax_;
  std::vector<Eigen::VectorXd> table_;
};

// Slices D_u g_M^{s(|u|)} T_{|u|} of the pre-activation cumulants, keyed by the
// compact (possibly unsorted) pattern u and cached. The source returns nullopt
// for untracked orders, which then contribute zero.
class PreActivationSlices {
public:
  using Source = std::function<std::optional<DiagSlice>(const IntVec& pattern)>;
  explicit PreActivationSlices(Source source) : source_(std::move(source)) {}
  const DiagSlice* get(const IntVec& pattern);

private:
  Source source_;
  std::map<IntVec, std::optional<DiagSlice>> cache_;
};

// Dense source: slice_of_cup of the contracted tracked tensors.
PreActivationSlices::Source dense_source(const TrackingSchedule& sched, const std::map<int, SymTensor>& t,
                                         const Eigen::MatrixXd& m);

// One term of the truncated diagram sum over `vars` variables: the Hermite
// orders k, the connected mixed vector partition and c_vec / k!.
struct DiagramTerm {
  double coef;
  IntVec k;
  std::vector<IntVec> blocks;
};

const std::vector<DiagramTerm>& diagram_terms(int vars, int K);

// Power-cumulant slice for a descending exponent vector alpha at distinct indices.
DiagSlice power_cumulant(const IntVec& alpha, const HermiteTable& h, PreActivationSlices& pre, int K, int n);

// Cumulant slice with pattern lambda from the diagram sum over |lambda| copies
// of the activation itself, without power cumulants.
DiagSlice ablated_cumulant(const IntVec& lambda, const HermiteTable& h, PreActivationSlices& pre, int K, int n);

// Partitions of r that can carry s traces.
std::vector<IntVec> partitions_with_traces(int r, int s);

// Tracked tensor of rank r - 2s from the cumulant slices of order r.
SymTensor project_slices(int r, int n, int s, std::span<const DiagSlice> slices);

// Pre-activation variances from the (2) slice, floored; counts go to `state`.
Eigen::VectorXd floored_variance(const DiagSlice* diag2, int n, double floor, CumulantState& state);

}  // namespace kprop::detail
