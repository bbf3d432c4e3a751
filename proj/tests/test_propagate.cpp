#include "kprop/errors.hpp"
#include "kprop/factorized.hpp"
#include "kprop/network.hpp"
#include "kprop/propagate.hpp"
#include "kprop/rng.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <numbers>

namespace kprop {
namespace {

struct Net {
  NetworkSpec spec;
  Weights w;
};

Net relu_net(int layers, int n, std::uint64_t seed) {
  Net net{NetworkSpec::uniform(layers, n, Activation::relu()), {}};
  net.w = init_weights(net.spec, {seed, 0});
  return net;
}

Net tanh_bias_net(int layers, int n, std::uint64_t seed) {
  Net net{NetworkSpec::uniform(layers, n, Activation::tanh()), {}};
  net.spec.use_bias = true;
  net.spec.init = InitScheme::critical;
  net.spec.q_star = 0.85;
  net.w = init_weights(net.spec, {seed, 0});
  return net;
}

Eigen::VectorXd run(const Net& net, int K, Variant v) {
  EstimatorConfig cfg;
  cfg.K = K;
  cfg.variant = v;
  return propagate(net.spec, net.w, cfg).estimate;
}

double max_rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

TEST(Schedule, Cutoffs) {
  using S = TrackingSchedule;
  EXPECT_EQ(S::make(1, Variant::basic).s, (std::vector<int>{kUntracked, 0, 1}));
  EXPECT_EQ(S::make(2, Variant::basic).s, (std::vector<int>{kUntracked, 0, 0}));
  EXPECT_EQ(S::make(3, Variant::basic).s, (std::vector<int>{kUntracked, 0, 0, 0, 2}));
  EXPECT_EQ(S::make(4, Variant::basic).s, (std::vector<int>{kUntracked, 0, 0, 0, 0}));
  EXPECT_EQ(S::make(1, Variant::augmented).s, S::make(1, Variant::basic).s);
  EXPECT_EQ(S::make(2, Variant::augmented).s, (std::vector<int>{kUntracked, 0, 0, 1, 2}));
  EXPECT_EQ(S::make(3, Variant::augmented).s, (std::vector<int>{kUntracked, 0, 0, 0, 1}));
  EXPECT_EQ(S::make(3, Variant::ablated).s, (std::vector<int>{kUntracked, 0, 0, 0}));
  EXPECT_THROW(S::make(0, Variant::basic), InvalidArgument);
  EXPECT_THROW(S::make(5, Variant::basic), InvalidArgument);
  EXPECT_EQ(parse_variant(to_string(Variant::factorized)), Variant::factorized);
  EXPECT_THROW(parse_variant("dense"), ConfigError);
}

TEST(Propagate, EngineMatchesMeanAndCovarianceAlgorithms) {
  int nets = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int n = 4 + static_cast<int>(seed % 4) * 4;
    const int layers = 1 + static_cast<int>(seed % 4);
    for (const Net& net : {relu_net(layers, n, seed), tanh_bias_net(layers, n, 100 + seed)}) {
      ++nets;
      EXPECT_LT((run(net, 1, Variant::basic) - mean_prop(net.spec, net.w)).cwiseAbs().maxCoeff(), 1e-12)
          << "seed " << seed;
      EXPECT_LT((run(net, 2, Variant::basic) - cov_prop(net.spec, net.w)).cwiseAbs().maxCoeff(), 1e-12)
          << "seed " << seed;
    }
  }
  EXPECT_EQ(nets, 20);
}

TEST(Propagate, IdentityActivationsGiveZero) {
  auto spec = NetworkSpec::uniform(3, 5, Activation::identity());
  const auto w = init_weights(spec, {3, 0});
  for (int K = 1; K <= 4; ++K)
    for (Variant v : {Variant::basic, Variant::augmented, Variant::ablated, Variant::factorized}) {
      if (v == Variant::factorized && K == 4) continue;
      EXPECT_TRUE(run({spec, w}, K, v).isZero(0.0)) << "K=" << K << " " << to_string(v);
    }
}

TEST(Propagate, ZeroWeights) {
  for (int K = 1; K <= 4; ++K) {
    Net net{NetworkSpec::uniform(2, 4, Activation::relu()), {}};
    net.w.w.assign(3, Eigen::MatrixXd::Zero(4, 4));
    EXPECT_TRUE(run(net, K, Variant::basic).isZero(0.0));
    EXPECT_TRUE(propagate_ablated(net.spec, net.w, K).isZero(0.0));
    EXPECT_GT(propagate(net.spec, net.w, {K, Variant::basic}).state.clamped_variances, 0);
  }
}

TEST(Propagate, CovarianceIsExactForLinearNetworks) {
  auto spec = NetworkSpec::uniform(3, 6, Activation::identity());
  const auto w = init_weights(spec, {11, 0});
  const auto res = propagate(spec, w, {2, Variant::basic});
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(6, 6);
  for (int l = 0; l < 3; ++l) p = w.w[l] * p;
  EXPECT_LT((res.state.eta.at(2).to_matrix() - p * p.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd diag = (p * p.transpose()).diagonal();
  EXPECT_LT((res.state.variance - diag).cwiseAbs().maxCoeff(), 1e-12);

  std::mt19937_64 gen(1);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(testing::random_matrix(6, 6, gen)).householderQ();
  Weights ortho;
  ortho.w.assign(4, q);
  const auto r2 = propagate(spec, ortho, {2, Variant::basic});
  EXPECT_LT((r2.state.eta.at(2).to_matrix() - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, PermutationEquivariance) {
  const Net net = tanh_bias_net(2, 6, 21);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  Net p = net;
  for (std::size_t l = 0; l < p.w.w.size(); ++l) {
    p.w.w[l] = perm * net.w.w[l] * perm.transpose();
    p.w.b[l] = perm * net.w.b[l];
  }
  for (int K = 1; K <= 3; ++K)
    for (Variant v : {Variant::basic, Variant::augmented, Variant::ablated, Variant::factorized})
      EXPECT_LT((run(p, K, v) - perm * run(net, K, v)).cwiseAbs().maxCoeff(), 1e-12) << K << to_string(v);
}

TEST(Propagate, AblatedDiffersFromCovarianceAlgorithm) {
  const Net net = relu_net(2, 4, 5);
  const double diff = (propagate_ablated(net.spec, net.w, 2) - cov_prop(net.spec, net.w)).cwiseAbs().maxCoeff();
  EXPECT_GT(diff, 1e-6);
}

TEST(Propagate, VariantsCoincideWhereTheyShould) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Net net = relu_net(3, 8, 40 + seed);
    EXPECT_EQ(run(net, 1, Variant::augmented), run(net, 1, Variant::basic));
    EXPECT_EQ(run(net, 2, Variant::factorized), run(net, 2, Variant::basic));
    EXPECT_EQ(run(net, 1, Variant::factorized), run(net, 1, Variant::basic));
    // The extra rank-(K+1) trace channel never reaches the k(nu) <= K sum for even K.
    EXPECT_LT((run(net, 2, Variant::augmented) - run(net, 2, Variant::basic)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Propagate, OneHiddenLayerIsExact) {
  for (const Net& net : {relu_net(1, 8, 3), tanh_bias_net(1, 6, 4)}) {
    const auto truth = ground_truth(net.spec, net.w, std::uint64_t{1} << 20, {derive_seed(3, 7), 0});
    const Eigen::VectorXd ref = run(net, 2, Variant::basic);
    for (int K = 1; K <= 4; ++K)
      for (Variant v : {Variant::basic, Variant::augmented, Variant::ablated, Variant::factorized}) {
        // Ablated K=1 evaluates the first activation at unit variance by definition.
        if ((v == Variant::factorized && K == 4) || (v == Variant::ablated && K == 1)) continue;
        const Eigen::VectorXd e = run(net, K, v);
        EXPECT_LT((e - ref).cwiseAbs().maxCoeff(), 1e-10) << K << to_string(v);
        for (int i = 0; i < e.size(); ++i) EXPECT_LT(std::abs(e[i] - truth.mean[i]), 5 * truth.std_error[i]);
      }
  }
}

TEST(Propagate, AblatedMeanUsesUnitVariance) {
  const Net net = tanh_bias_net(1, 5, 9);
  const Eigen::VectorXd pre = net.w.w[0] * Eigen::VectorXd::Zero(5) + net.w.b[0];
  Eigen::VectorXd a(5);
  for (int i = 0; i < 5; ++i) a[i] = gaussian_moment(Activation::tanh(), 1, pre[i], 1.0);
  const Eigen::VectorXd want = net.w.w[1] * a + net.w.b[1];
  EXPECT_LT((propagate_ablated(net.spec, net.w, 1) - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, FinalActivationImprovesWithOrder) {
  Net net = relu_net(1, 6, 12);
  net.spec.final_activation = Activation::step(0.5);
  const auto truth = ground_truth(net.spec, net.w, std::uint64_t{1} << 20, {derive_seed(12, 7), 0});
  std::vector<double> err;
  for (int K = 1; K <= 3; ++K) err.push_back((run(net, K, Variant::basic) - truth.mean).cwiseAbs().mean());
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
  EXPECT_LT(err[2], 0.02);
  EXPECT_LT((run(net, 3, Variant::factorized) - run(net, 3, Variant::basic)).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd p = run(net, 2, Variant::basic);
  EXPECT_LT((p - cov_prop(net.spec, net.w)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, StateJson) {
  const Net net = relu_net(2, 4, 1);
  const auto res = propagate(net.spec, net.w, {3, Variant::basic});
  const auto j = nlohmann::json::parse(state_to_json(res.state));
  EXPECT_EQ(j["K"], 3);
  EXPECT_EQ(j["mean"].size(), 4u);
  EXPECT_EQ(j["orders"].size(), 3u);
  EXPECT_EQ(j["orders"][2]["rank"], 0);
}

using testing::relu_covariance_quadrature;
using testing::relu_covariance_series;

TEST(CovarianceSeries, BivariateReluMatchesQuadrature) {
  for (double rho : {0.2, 0.5}) EXPECT_NEAR(relu_covariance_series(rho, 12), relu_covariance_quadrature(rho), 1e-6);
  // At rho = 0.8 the k <= 12 truncation leaves a tail of about 3e-5; more terms close the gap.
  const double q = relu_covariance_quadrature(0.8);
  EXPECT_GT(std::abs(relu_covariance_series(0.8, 12) - q), 1e-6);
  EXPECT_NEAR(relu_covariance_series(0.8, 60), q, 1e-6);
  // Closed-form arc-cosine kernel as a second oracle.
  for (double rho : {0.2, 0.5, 0.8}) {
    const double e12 = (std::sqrt(1 - rho * rho) + (std::numbers::pi - std::acos(rho)) * rho) / (2 * std::numbers::pi);
    EXPECT_NEAR(relu_covariance_quadrature(rho), e12 - 1.0 / (2 * std::numbers::pi), 1e-10);
  }
}

// Dense expansion of a factored tensor.
SymTensor materialize(const Factored3& f) {
  const int n = f.dim();
  SymTensor t(3, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) t.at(std::array{i, j, k}) = f.entry(i, j, k);
  return t;
}

Factored3 random_factored(int n, int J, std::mt19937_64& gen) {
  return Factored3(testing::random_matrix(n, J, gen), testing::random_matrix(n, J, gen), testing::random_matrix(n, J, gen));
}

TEST(Factorized, MaterializeIsSymmetricAndLinear) {
  std::mt19937_64 gen(3);
  const Factored3 a = random_factored(4, 3, gen), b = random_factored(4, 2, gen);
  EXPECT_LT(materialize(a).max_asymmetry(), 1e-14);
  Factored3 c = a;
  c.append(b);
  EXPECT_EQ(c.factors(), 5);
  EXPECT_LT(testing::max_abs_diff(materialize(c).data(), (materialize(a) + materialize(b)).data()), 1e-13);
}

TEST(Factorized, ContractMatchesDense) {
  std::mt19937_64 gen(4);
  const Eigen::MatrixXd w = testing::random_matrix(4, 4, gen);
  const Eigen::MatrixXd unit = Eigen::VectorXd::Unit(4, 2);
  const Factored3 e(unit, unit, unit);
  EXPECT_LT(testing::max_abs_diff(materialize(f3_contract(e, w)).data(), symmetric_contract(materialize(e), w).data()),
            1e-13);
  const Factored3 f = random_factored(4, 3, gen);
  EXPECT_LT(testing::max_abs_diff(materialize(f3_contract(f, w)).data(), symmetric_contract(materialize(f), w).data()),
            1e-12);
  EXPECT_EQ(f3_contract(f, Eigen::MatrixXd::Identity(4, 4)).a, f.a);
  EXPECT_THROW(f3_contract(f, Eigen::MatrixXd::Identity(3, 3)), InvalidArgument);
}

TEST(Factorized, DiagonalsMatchDense) {
  std::mt19937_64 gen(5);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
  const DiagSlice ones = f3_diagonal(Factored3(id, id, id), {3});
  for (double v : ones.data) EXPECT_DOUBLE_EQ(v, 1.0);
  const Factored3 f = random_factored(4, 3, gen);
  const SymTensor dense = materialize(f);
  for (const IntVec& lam : {IntVec{3}, IntVec{2, 1}})
    EXPECT_LT(testing::max_abs_diff(f3_diagonal(f, lam).data, diagonal_slice(dense, lam).data), 1e-12);
  const Eigen::VectorXd a = testing::random_matrix(4, 1, gen);
  const DiagSlice s = f3_diagonal(Factored3(a, a, a), {2, 1});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(s.at(std::array{i, j}), i == j ? 0.0 : a[i] * a[i] * a[j], 1e-14);
  EXPECT_THROW(f3_diagonal(f, {1, 1, 1}), InvalidArgument);
}

TEST(Factorized, EmbeddingsMatchDense) {
  std::mt19937_64 gen(6);
  DiagSlice d3({3}, 4);
  for (auto& v : d3.data) v = std::normal_distribution<double>()(gen);
  EXPECT_EQ(f3_embed_diagonal(d3).factors(), 4);
  EXPECT_LT(testing::max_abs_diff(f3_diagonal(f3_embed_diagonal(d3), {3}).data, d3.data), 1e-14);
  EXPECT_LT(testing::max_abs_diff(materialize(f3_embed_diagonal(d3)).data(), embed_slice(d3).data()), 1e-14);
  DiagSlice d21({2, 1}, 4);
  for (auto& v : d21.data) v = std::normal_distribution<double>()(gen);
  d21.zero_repeated();
  EXPECT_LT(testing::max_abs_diff(materialize(f3_embed_diagonal(d21)).data(), embed_slice(d21).data()), 1e-14);
  DiagSlice zero({2, 1}, 4);
  EXPECT_EQ(materialize(f3_embed_diagonal(zero)).frobenius_norm(), 0.0);
}

TEST(Factorized, MatchesBasicPipeline) {
  for (std::uint64_t seed = 0; seed < 4; ++seed)
    for (int n : {8, 16})
      for (int layers : {2, 3}) {
        const Net net = seed % 2 ? tanh_bias_net(layers, n, seed) : relu_net(layers, n, seed);
        std::vector<int> counts;
        const auto f = propagate_factorized_k3(net.spec, net.w, {3, Variant::factorized}, &counts);
        EXPECT_LT(max_rel(f.estimate, run(net, 3, Variant::basic)), 1e-8) << seed << " " << n << " " << layers;
        ASSERT_EQ(static_cast<int>(counts.size()), layers);
        for (int l = 0; l < layers; ++l) EXPECT_EQ(counts[l], 3 * n * (l + 1));
      }
}

TEST(Factorized, KFourIsUnimplemented) {
  const Net net = relu_net(2, 4, 1);
  EXPECT_THROW(run(net, 4, Variant::factorized), Unimplemented);
}

}  // namespace
}  // namespace kprop
