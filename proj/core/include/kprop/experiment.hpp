#pragma once

#include "kprop/hermite.hpp"
#include "kprop/network.hpp"
#include "kprop/propagate.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kprop {

inline constexpr int kCsvSchemaVersion = 1;

// Seed tags: every (seed, purpose) pair gets its own derived seed.
inline constexpr std::uint64_t kTagNetwork = 1;
inline constexpr std::uint64_t kTagTruth = 2;
inline constexpr std::uint64_t kTagSampling = 3;

struct EstimatorSpec {
  std::string method;  // "kprop" or "mc"
  int K = 1;
  Variant variant = Variant::basic;
  std::uint64_t samples = 0;

  // "kprop-K2-basic", "mc-100".
  std::string tag() const;
  bool operator==(const EstimatorSpec&) const = default;
};

struct SweepConfig {
  std::vector<int> widths;
  std::vector<int> depths;
  std::vector<Activation> activations{Activation::relu()};
  std::vector<std::uint64_t> seeds;
  std::uint64_t truth_samples = std::uint64_t{1} << 20;
  std::vector<EstimatorSpec> estimators;
  bool use_bias = false;
  InitScheme init = InitScheme::he;
  double q_star = 1.0;
  std::optional<Activation> final_activation;
  bool timing = true;  // false writes wall_ms = 0 for byte-comparable output
};

struct ExperimentRecord {
  std::string config_id;
  std::uint64_t seed = 0;
  int n = 0;
  int L = 0;
  std::string activation;
  std::string estimator;
  int K = 0;
  std::string variant;
  std::uint64_t samples = 0;
  std::string digest;
  double flops = 0.0;
  double mse = 0.0;
  double variance_normalized_mse = 0.0;
  double truth_noise = 0.0;  // mean squared standard error of the ground truth
  double wall_ms = 0.0;
};

struct LpeConfig {
  int width = 64;
  int hidden_layers = 2;
  Activation activation = Activation::relu();
  double threshold = 3.0;
  std::vector<std::uint64_t> seeds;
  std::uint64_t truth_samples = std::uint64_t{1} << 22;
  std::uint64_t mc_samples = 2000;
  int K = 3;
  Variant variant = Variant::factorized;
};

inline const std::vector<std::string> kLpeMethods{"kprop", "mc", "mc-gauss", "mc-cumulant", "zero"};

// One (seed, bucket, method) cell; aggregate by summing the squared terms.
struct LpeRecord {
  std::uint64_t seed = 0;
  int bucket = 0;  // decade k: true probability in [10^(k-1/2), 10^(k+1/2))
  std::string method;
  int count = 0;
  double sum_sq_error = 0.0;
  double sum_sq_prob = 0.0;
  double relative_rmse = 0.0;
  double flops = 0.0;
};

// Parse and validate; throws ConfigError with the offending key.
SweepConfig parse_sweep_config(const std::string& json_text);
LpeConfig parse_lpe_config(const std::string& json_text);
std::string read_text_file(const std::string& path);

NetworkSpec sweep_network(const SweepConfig& config, int n, int L, const Activation& act);
NetworkSpec lpe_network(const LpeConfig& config);

// Rows sorted by (config id, seed, estimator order); independent of `threads`.
std::vector<ExperimentRecord> run_sweep(const SweepConfig& config, int threads = 0);
std::vector<LpeRecord> run_lpe(const LpeConfig& config, int threads = 0);

std::string sweep_csv(const std::vector<ExperimentRecord>& rows);
std::string lpe_csv(const std::vector<LpeRecord>& rows);

// Bucket of a probability; p must be positive.
int probability_bucket(double p);
// Threshold probability from sampled pre-activation cumulants, using the same
// Hermite machinery as the estimator; kappa3 = 0 gives the Gaussian tail.
Eigen::VectorXd cumulant_tail_estimate(const Activation& final, const Eigen::VectorXd& mean,
                                       const Eigen::VectorXd& variance, const Eigen::VectorXd& kappa3);
// FNV-1a over the little-endian bytes of the vector.
std::string estimate_digest(const Eigen::VectorXd& v);
// printf %.17g.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // throws ConfigError when missing
};
CsvTable parse_csv(const std::string& text);

struct MeanSe {
  double mean = 0.0;
  std::optional<double> se;  // none for a single value
};
MeanSe mean_se(const std::vector<double>& v);
// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct Report {
  std::string summary_json;
  std::map<std::string, std::string> figures;  // file stem -> CSV
};
// Accepts sweep or LPE output; throws ConfigError on missing columns.
Report make_report(const std::string& csv_text);

}  // namespace kprop
