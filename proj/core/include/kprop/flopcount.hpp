#pragma once

#include "kprop/combinat.hpp"
#include "kprop/network.hpp"
#include "kprop/propagate.hpp"

#include <cstdint>
#include <vector>

namespace kprop {

// Analytic operation counts by class; adds and multiplies are counted separately.
struct FlopLedger {
  double contract = 0.0;     // symmetric contractions and matrix-vector products
  double einsum = 0.0;       // other matrix products (W W^T, factored products)
  double elementwise = 0.0;  // slice arithmetic, embeddings, bias adds
  double hermite = 0.0;      // Hermite coefficient evaluation

  double total() const { return contract + einsum + elementwise + hermite; }
  FlopLedger& operator+=(const FlopLedger& o);
};

// Fraction of distinct entries of a symmetric d-tensor: C(n+d-1, d) / n^d.
double adjustment_alpha(int n, int d);
// Same for lambda-symmetric tensors: prod_i C(n+c_i-1, c_i) / n^{c_i}, c_i = parts of lambda equal to i.
double adjustment_alpha(int n, const IntVec& lambda);
// Average intermediate fraction over the d single-mode contractions of a symmetric d-tensor.
double adjustment_beta(int n, int d);
double adjustment_beta_limit(int d);

// Flops of one forward pass times N: 2 n^2 per layer plus activation and bias work.
double flops_mc(const NetworkSpec& spec, std::uint64_t samples);
double flops_mc(int n, int layers, std::uint64_t samples);

// Flops the estimator performs on a network of this shape.
FlopLedger estimator_flops(const NetworkSpec& spec, const EstimatorConfig& config);
double flops_estimator(const NetworkSpec& spec, const EstimatorConfig& config);
// Bias-free ReLU network of width n with `layers` hidden layers.
double flops_estimator(const EstimatorConfig& config, int n, int layers);

// Leading coefficient of the bias-free ReLU count: of n^{K+1} L for dense variants and of
// n^3 L^2 for factorized K = 3, from an exact polynomial fit in n of the per-layer differences.
double flops_leading_coefficient(const EstimatorConfig& config);
// Least-squares polynomial of the given degree through (x, y), coefficients lowest first.
std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree);
double polyval(const std::vector<double>& coef, double x);

}  // namespace kprop
