#pragma once

#include "kprop/combinat.hpp"
#include "kprop/propagate.hpp"
#include "kprop/symtensor.hpp"

#include <Eigen/Dense>

#include <vector>

namespace kprop {

// T_{i1 i2 i3} = (1/6) sum over permutations s of sum_j A_{i_s1 j} B_{i_s2 j} C_{i_s3 j}.
struct Factored3 {
  Eigen::MatrixXd a, b, c;  // n x J

  Factored3() = default;
  explicit Factored3(int n) : a(n, 0), b(n, 0), c(n, 0) {}
  Factored3(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::MatrixXd c);

  int dim() const { return static_cast<int>(a.rows()); }
  int factors() const { return static_cast<int>(a.cols()); }
  // Concatenates factors, which adds the represented tensors.
  Factored3& append(const Factored3& o);
  double entry(int i, int j, int k) const;
};

// F(WA, WB, WC).
Factored3 f3_contract(const Factored3& f, const Eigen::MatrixXd& w);

// Reduced slice for lambda = (3) or (2,1); for (2,1) the first index is the repeated one.
DiagSlice f3_diagonal(const Factored3& f, const IntVec& lambda);

// Factored embedding of a (3) or (2,1) slice, using n factors.
Factored3 f3_embed_diagonal(const DiagSlice& slice);

// Factored K=3 pipeline. `factor_counts` receives J after each hidden layer.
PropagationResult propagate_factorized_k3(const NetworkSpec& spec, const Weights& weights,
                                          const EstimatorConfig& config, std::vector<int>* factor_counts = nullptr);

// Dispatch by K: K <= 2 equals basic, K = 3 uses the factored pipeline, K = 4 throws Unimplemented.
PropagationResult propagate_factorized(const NetworkSpec& spec, const Weights& weights, const EstimatorConfig& config);

}  // namespace kprop
