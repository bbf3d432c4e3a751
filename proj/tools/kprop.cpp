#include "kprop/errors.hpp"
#include "kprop/experiment.hpp"
#include "kprop/flopcount.hpp"
#include "kprop/network.hpp"
#include "kprop/propagate.hpp"
#include "kprop/rng.hpp"
#include "kprop/thread_pool.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void write_file(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw kprop::IoError("cannot open '" + path + "' for writing");
  os << text;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

int main(int argc, char** argv) {
  using namespace kprop;
  CLI::App app{"Sample-free estimation of random MLP outputs by cumulant propagation"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, std::string("Worker threads (default: ") + kThreadsEnv + " or all cores)")
      ->check(CLI::NonNegativeNumber);

  std::string config_path, out_path = "-", figures_dir;

  auto* sweep = app.add_subcommand("sweep", "Run an MSE sweep over widths, depths and estimators");
  sweep->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--out", out_path, "Output CSV");

  auto* lpe = app.add_subcommand("lpe", "Run the low-probability estimation experiment");
  lpe->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  lpe->add_option("-o,--out", out_path, "Output CSV");

  std::string csv_path;
  auto* report = app.add_subcommand("report", "Aggregate a sweep or LPE CSV into summary JSON");
  report->add_option("csv", csv_path, "Input CSV")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--out", out_path, "Summary JSON");
  report->add_option("--figures", figures_dir, "Directory for per-figure CSVs");

  int n = 0, layers = 0;
  std::uint64_t seed = 0;
  std::string activation = "relu", final_act, init = "he";
  double q_star = 1.0;
  bool bias = false;
  auto* gen = app.add_subcommand("gen-net", "Draw a random network and save it");
  gen->add_option("--n", n, "Width")->required()->check(CLI::PositiveNumber);
  gen->add_option("--layers", layers, "Hidden layers")->required()->check(CLI::NonNegativeNumber);
  gen->add_option("--activation", activation, "relu, gelu, tanh, identity, threshold:<c>, poly:<a0>,...");
  gen->add_option("--final", final_act, "Activation applied to the output");
  gen->add_option("--init", init, "he or critical");
  gen->add_option("--q-star", q_star, "Fixed-point variance for critical init");
  gen->add_flag("--bias", bias, "Add bias vectors");
  gen->add_option("--seed", seed, "Seed");
  gen->add_option("-o,--out", out_path, "Weight file")->required();

  std::string net_path, method = "kprop", variant = "basic";
  int K = 2;
  std::uint64_t samples = 1000;
  bool with_state = false;
  auto* est = app.add_subcommand("estimate", "Estimate the expected output of a saved network");
  est->add_option("--net", net_path, "Weight file")->required()->check(CLI::ExistingFile);
  est->add_option("--method", method, "mc or kprop")->check(CLI::IsMember({"mc", "kprop"}));
  est->add_option("--k", K, "Maximum cumulant order")->check(CLI::Range(1, kMaxOrder));
  est->add_option("--variant", variant, "basic, augmented, ablated or factorized");
  est->add_option("--samples", samples, "Monte Carlo samples")->check(CLI::PositiveNumber);
  est->add_option("--seed", seed, "Monte Carlo seed");
  est->add_flag("--state", with_state, "Include the last hidden layer's cumulant summary");
  est->add_option("-o,--out", out_path, "Output JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (threads <= 0) threads = default_thread_count();

  try {
    if (*sweep) {
      write_file(out_path, sweep_csv(run_sweep(parse_sweep_config(read_text_file(config_path)), threads)));
    } else if (*lpe) {
      write_file(out_path, lpe_csv(run_lpe(parse_lpe_config(read_text_file(config_path)), threads)));
    } else if (*report) {
      const Report rep = make_report(read_text_file(csv_path));
      write_file(out_path, rep.summary_json);
      if (!figures_dir.empty()) {
        std::filesystem::create_directories(figures_dir);
        for (const auto& [stem, text] : rep.figures)
          write_file((std::filesystem::path(figures_dir) / (stem + ".csv")).string(), text);
      }
    } else if (*gen) {
      NetworkFile net;
      net.spec = NetworkSpec::uniform(layers, n, Activation::parse(activation));
      if (!final_act.empty()) net.spec.final_activation = Activation::parse(final_act);
      net.spec.use_bias = bias;
      net.spec.init = parse_init_scheme(init);
      net.spec.q_star = q_star;
      net.rng = {seed, 0};
      net.weights = init_weights(net.spec, net.rng);
      save_network(out_path, net);
    } else if (*est) {
      const NetworkFile net = load_network(net_path);
      nlohmann::json j;
      j["method"] = method;
      if (method == "mc") {
        const McResult r = monte_carlo_estimate(net.spec, net.weights, samples, {seed, 0}, threads);
        j["samples"] = samples;
        j["estimate"] = to_vector(r.mean);
        j["stdError"] = to_vector(r.std_error);
        j["flops"] = flops_mc(net.spec, samples);
      } else {
        EstimatorConfig cfg;
        cfg.K = K;
        cfg.variant = parse_variant(variant);
        const PropagationResult r = propagate(net.spec, net.weights, cfg);
        j["K"] = K;
        j["variant"] = variant;
        j["estimate"] = to_vector(r.estimate);
        j["flops"] = flops_estimator(net.spec, cfg);
        if (with_state) j["state"] = nlohmann::json::parse(state_to_json(r.state));
      }
      write_file(out_path, j.dump(2) + "\n");
    }
  } catch (const NumericalError& e) {
    std::cerr << "kprop: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "kprop: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "kprop: invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Unimplemented& e) {
    std::cerr << "kprop: unsupported: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "kprop: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "kprop: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
