#pragma once

#include "kprop/hermite.hpp"
#include "kprop/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kprop {

enum class InitScheme { he, critical };

std::string to_string(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);

// Square MLP: x -> W1 x (+b1) -> phi_1 -> ... -> phi_L -> W_{L+1} (+b_{L+1}) -> [final].
struct NetworkSpec {
  int hidden_layers = 0;
  int width = 1;
  std::vector<Activation> activations;
  // Applied to the output when set (threshold networks for rare-event estimation).
  std::optional<Activation> final_activation;
  bool use_bias = false;
  InitScheme init = InitScheme::he;
  double q_star = 1.0;

  // Same activation on every hidden layer.
  static NetworkSpec uniform(int layers, int width, const Activation& act);
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

struct Weights {
  std::vector<Eigen::MatrixXd> w;  // L+1 matrices, each n x n
  std::vector<Eigen::VectorXd> b;  // empty, or L+1 vectors

  bool has_bias() const { return !b.empty(); }
  void check(const NetworkSpec& spec) const;
};

struct CriticalScales {
  double sigma_w2;
  double sigma_b2;
};

// Solves q* = sw2 E[phi(sqrt(q*) Z)^2] + sb2 and 1 = sw2 E[phi'(sqrt(q*) Z)^2].
CriticalScales critical_scales(const Activation& act, double q_star, int nodes = kDefaultQuadratureNodes);

// Per-layer weight variances (times n) and bias variances for a spec.
std::vector<CriticalScales> init_scales(const NetworkSpec& spec);

// Draws W^(l) row-major then b^(l) (when biased) for l = 1..L+1 from one stream.
Weights init_weights(const NetworkSpec& spec, const RngSpec& rng);

Eigen::VectorXd forward(const NetworkSpec& spec, const Weights& weights, const Eigen::VectorXd& x);
// Columns are samples. When `pre_final` is given it receives the input to the final activation.
Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const Weights& weights, const Eigen::MatrixXd& x,
                              Eigen::MatrixXd* pre_final = nullptr);

// Per-coordinate streaming moments up to third order, mergeable across shards.
struct Moments {
  std::uint64_t count = 0;
  Eigen::VectorXd mean, m2, m3;

  explicit Moments(int dim = 0);
  // Adds the columns of a sample batch.
  void add_batch(const Eigen::MatrixXd& x);
  void merge(const Moments& o);
  Eigen::VectorXd variance() const;  // unbiased; zero when count < 2
  Eigen::VectorXd third_cumulant() const;  // unbiased k-statistic; zero when count < 3
};

struct McResult {
  std::uint64_t samples = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::VectorXd std_error;
  // Moments of the final pre-activation; set only for networks with a final activation.
  std::optional<Moments> pre_final;
};

inline constexpr std::uint64_t kMcShardSize = std::uint64_t{1} << 16;
inline constexpr int kMcBatch = 256;

// Mean of N forward passes on x ~ N(0, I). Samples are split into fixed-size
// shards; shard s draws from stream rng.stream + s and shards are merged in
// index order, so the result does not depend on the thread count.
McResult monte_carlo_estimate(const NetworkSpec& spec, const Weights& weights, std::uint64_t samples,
                              const RngSpec& rng, int threads = 0);

McResult ground_truth(const NetworkSpec& spec, const Weights& weights, std::uint64_t budget, const RngSpec& rng,
                      int threads = 0);

struct NetworkFile {
  NetworkSpec spec;
  Weights weights;
  RngSpec rng;
};

inline constexpr int kWeightFileVersion = 1;

// One JSON header line, then little-endian f64 row-major W^(l) followed by b^(l) per layer.
void save_network(const std::string& path, const NetworkFile& net);
NetworkFile load_network(const std::string& path);

}  // namespace kprop
