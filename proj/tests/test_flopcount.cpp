#include "kprop/errors.hpp"
#include "kprop/flopcount.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace kprop {
namespace {

EstimatorConfig config(int K, Variant v = Variant::basic) {
  EstimatorConfig c;
  c.K = K;
  c.variant = v;
  return c;
}

TEST(Adjustment, BetaLimits) {
  const double limits[] = {1.0, 3.0 / 4.0, 7.0 / 18.0, 5.0 / 32.0};
  for (int d = 1; d <= 4; ++d) {
    EXPECT_NEAR(adjustment_beta_limit(d), limits[d - 1], 1e-15);
    EXPECT_NEAR(adjustment_beta(1000000, d), limits[d - 1], 1e-5);
  }
}

TEST(Adjustment, SmallValues) {
  EXPECT_DOUBLE_EQ(adjustment_alpha(2, 2), 0.75);
  EXPECT_DOUBLE_EQ(adjustment_alpha(2, IntVec{1, 1}), 0.75);
  EXPECT_DOUBLE_EQ(adjustment_alpha(3, IntVec{1, 1}), 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(adjustment_alpha(3, IntVec{2, 1}), 1.0);
  // beta_{2,n} = 1/2 + (n + 1) / (4 n)
  EXPECT_DOUBLE_EQ(adjustment_beta(2, 2), 7.0 / 8.0);
  EXPECT_DOUBLE_EQ(adjustment_beta(5, 1), 1.0);
  EXPECT_THROW(adjustment_alpha(0, 2), InvalidArgument);
  EXPECT_THROW(adjustment_beta(4, 0), InvalidArgument);
}

TEST(Adjustment, InUnitIntervalAndDecreasingInDegree) {
  for (int n : {1, 2, 3, 8, 64, 256}) {
    double prev_a = 2.0, prev_b = 2.0;
    for (int d = 1; d <= 6; ++d) {
      const double a = adjustment_alpha(n, d);
      const double b = adjustment_beta(n, d);
      EXPECT_GT(a, 0.0);
      EXPECT_LE(a, 1.0);
      EXPECT_GT(b, 0.0);
      EXPECT_LE(b, 1.0);
      if (n > 1) {
        EXPECT_LT(a, prev_a);
        EXPECT_LT(b, prev_b);
      }
      prev_a = a;
      prev_b = b;
    }
  }
}

TEST(McFlops, OneMatvec) {
  for (int n : {1, 7, 256}) EXPECT_DOUBLE_EQ(flops_mc(n, 0, 1), 2.0 * n * n);
  EXPECT_DOUBLE_EQ(flops_mc(4, 2, 10), 10.0 * (2.0 * 16 * 3 + 4 * 2));
}

TEST(McFlops, MatchesInstrumentedForwardPass) {
  // Count the adds, multiplies and activation evaluations of a naive forward pass.
  const int n = 5, layers = 3;
  double ops = 0.0;
  for (int l = 0; l <= layers; ++l) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) ops += 2.0;
    if (l < layers) ops += n;
  }
  EXPECT_DOUBLE_EQ(flops_mc(n, layers, 1), ops);
  const NetworkSpec spec = NetworkSpec::uniform(layers, n, Activation::relu());
  EXPECT_DOUBLE_EQ(flops_mc(spec, 3), 3.0 * ops);
}

TEST(EstimatorFlops, PolynomialInWidth) {
  const std::vector<double> fit_n{8, 16, 24, 32, 48, 64};
  for (Variant v : {Variant::basic, Variant::augmented, Variant::ablated, Variant::factorized}) {
    for (int K = 1; K <= 4; ++K) {
      if (v == Variant::factorized && K == 4) continue;
      for (int L : {1, 3}) {
        const EstimatorConfig c = config(K, v);
        std::vector<double> ys;
        for (double n : fit_n) ys.push_back(flops_estimator(c, static_cast<int>(n), L));
        const auto coef = polyfit(fit_n, ys, K + 1);
        const double want = flops_estimator(c, 128, L);
        EXPECT_NEAR(polyval(coef, 128.0), want, 1e-7 * want) << to_string(v) << " K=" << K << " L=" << L;
      }
    }
  }
}

TEST(EstimatorFlops, FactorizedCheaperAtModerateDepth) {
  for (int n : {64, 128, 256})
    for (int L = 1; L <= 4; ++L)
      EXPECT_LT(flops_estimator(config(3, Variant::factorized), n, L), flops_estimator(config(3), n, L))
          << "n=" << n << " L=" << L;
}

TEST(EstimatorFlops, FactorizedCostlierWhenDeep) {
  EXPECT_GT(flops_estimator(config(3, Variant::factorized), 16, 12), flops_estimator(config(3), 16, 12));
}

TEST(EstimatorFlops, LeadingCoefficients) {
  EXPECT_NEAR(flops_leading_coefficient(config(1)), 4.0, 1e-6);
  EXPECT_NEAR(flops_leading_coefficient(config(2)), 3.0, 1e-6);
  EXPECT_NEAR(flops_leading_coefficient(config(3)), 7.0 / 3.0, 1e-6);
  EXPECT_NEAR(flops_leading_coefficient(config(4)), 5.0 / 4.0, 1e-6);
  EXPECT_NEAR(flops_leading_coefficient(config(3, Variant::augmented)), 7.0 / 3.0, 1e-6);
  EXPECT_NEAR(flops_leading_coefficient(config(3, Variant::factorized)), 27.0, 1e-6);
}

TEST(EstimatorFlops, LedgerIsConsistent) {
  const NetworkSpec spec = NetworkSpec::uniform(3, 16, Activation::gelu());
  for (int K = 1; K <= 4; ++K) {
    const FlopLedger led = estimator_flops(spec, config(K));
    EXPECT_GT(led.contract, 0.0);
    EXPECT_GE(led.einsum, 0.0);
    EXPECT_GT(led.elementwise, 0.0);
    EXPECT_GT(led.hermite, 0.0);
    EXPECT_DOUBLE_EQ(led.total(), flops_estimator(spec, config(K)));
  }
  EXPECT_THROW(flops_estimator(spec, config(4, Variant::factorized)), Unimplemented);
}

TEST(EstimatorFlops, MonotoneInDepthAndOrder) {
  for (int K = 1; K <= 4; ++K)
    for (int L = 1; L < 5; ++L) EXPECT_LT(flops_estimator(config(K), 32, L), flops_estimator(config(K), 32, L + 1));
  for (int K = 1; K < 4; ++K) EXPECT_LT(flops_estimator(config(K), 64, 4), flops_estimator(config(K + 1), 64, 4));
}

}  // namespace
}  // namespace kprop
