#include "kprop/experiment.hpp"

#include "engine.hpp"
#include "kprop/errors.hpp"
#include "kprop/flopcount.hpp"
#include "kprop/rng.hpp"
#include "kprop/thread_pool.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace kprop {

namespace {

using nlohmann::json;

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::set<std::string>& required) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown config key '" + k + "'");
  for (const auto& k : required)
    if (!j.contains(k)) throw ConfigError("missing config key '" + k + "'");
}

template <class T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

Activation parse_activation(const std::string& text, const std::string& key) {
  try {
    return Activation::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

Variant parse_variant_key(const std::string& text) {
  try {
    return parse_variant(text);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void check_estimator_order(int K, Variant v) {
  if (K < 1 || K > kMaxOrder) throw ConfigError("K must be in 1.." + std::to_string(kMaxOrder));
  if (v == Variant::factorized && K > 3) throw ConfigError("factorized variant supports K <= 3");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double mean_of(const Eigen::VectorXd& v) { return v.size() ? v.mean() : 0.0; }

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

EstimatorConfig estimator_config(int K, Variant v) {
  EstimatorConfig c;
  c.K = K;
  c.variant = v;
  return c;
}

}  // namespace

std::string EstimatorSpec::tag() const {
  if (method == "mc") return "mc-" + std::to_string(samples);
  return method + "-K" + std::to_string(K) + "-" + to_string(variant);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

SweepConfig parse_sweep_config(const std::string& json_text) {
  const json j = parse_json(json_text);
  check_keys(j,
             {"widths", "depths", "activations", "seeds", "groundTruthSamples", "estimators", "useBias", "init",
              "qStar", "finalActivation", "timing"},
             {"widths", "depths", "seeds", "estimators"});
  SweepConfig c;
  c.widths = get<std::vector<int>>(j, "widths");
  c.depths = get<std::vector<int>>(j, "depths");
  c.seeds = get<std::vector<std::uint64_t>>(j, "seeds");
  if (c.widths.empty() || c.depths.empty() || c.seeds.empty())
    throw ConfigError("widths, depths and seeds must be non-empty");
  for (int n : c.widths)
    if (n < 1) throw ConfigError("widths must be positive");
  for (int L : c.depths)
    if (L < 0) throw ConfigError("depths must be non-negative");
  if (j.contains("activations")) {
    c.activations.clear();
    for (const auto& a : get<std::vector<std::string>>(j, "activations"))
      c.activations.push_back(parse_activation(a, "activations"));
    if (c.activations.empty()) throw ConfigError("activations must be non-empty");
  }
  c.truth_samples = get_or<std::uint64_t>(j, "groundTruthSamples", c.truth_samples);
  if (c.truth_samples < 2) throw ConfigError("groundTruthSamples must be at least 2");
  c.use_bias = get_or<bool>(j, "useBias", false);
  try {
    c.init = parse_init_scheme(get_or<std::string>(j, "init", "he"));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  c.q_star = get_or<double>(j, "qStar", 1.0);
  if (j.contains("finalActivation") && !j.at("finalActivation").is_null())
    c.final_activation = parse_activation(get<std::string>(j, "finalActivation"), "finalActivation");
  c.timing = get_or<bool>(j, "timing", true);

  const json& est = j.at("estimators");
  if (!est.is_array() || est.empty()) throw ConfigError("estimators must be a non-empty array");
  for (const json& e : est) {
    check_keys(e, {"method", "K", "variant", "samples"}, {"method"});
    EstimatorSpec s;
    s.method = get<std::string>(e, "method");
    if (s.method == "kprop") {
      s.K = get_or<int>(e, "K", 1);
      s.variant = parse_variant_key(get_or<std::string>(e, "variant", "basic"));
      check_estimator_order(s.K, s.variant);
    } else if (s.method == "mc") {
      s.K = 0;
      s.samples = get<std::uint64_t>(e, "samples");
      if (s.samples < 1) throw ConfigError("mc samples must be positive");
    } else {
      throw ConfigError("unknown estimator method '" + s.method + "'");
    }
    c.estimators.push_back(s);
  }
  return c;
}

LpeConfig parse_lpe_config(const std::string& json_text) {
  const json j = parse_json(json_text);
  check_keys(j,
             {"width", "hiddenLayers", "activation", "threshold", "seeds", "groundTruthSamples", "mcSamples", "K",
              "variant"},
             {"seeds"});
  LpeConfig c;
  c.width = get_or<int>(j, "width", c.width);
  c.hidden_layers = get_or<int>(j, "hiddenLayers", c.hidden_layers);
  if (j.contains("activation")) c.activation = parse_activation(get<std::string>(j, "activation"), "activation");
  c.threshold = get_or<double>(j, "threshold", c.threshold);
  c.seeds = get<std::vector<std::uint64_t>>(j, "seeds");
  c.truth_samples = get_or<std::uint64_t>(j, "groundTruthSamples", c.truth_samples);
  c.mc_samples = get_or<std::uint64_t>(j, "mcSamples", c.mc_samples);
  c.K = get_or<int>(j, "K", c.K);
  c.variant = parse_variant_key(get_or<std::string>(j, "variant", to_string(c.variant)));
  if (c.width < 1 || c.hidden_layers < 0) throw ConfigError("width must be positive and hiddenLayers non-negative");
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (c.truth_samples < 2 || c.mc_samples < 3) throw ConfigError("sample budgets are too small");
  check_estimator_order(c.K, c.variant);
  return c;
}

NetworkSpec sweep_network(const SweepConfig& config, int n, int L, const Activation& act) {
  NetworkSpec s = NetworkSpec::uniform(L, n, act);
  s.use_bias = config.use_bias;
  s.init = config.init;
  s.q_star = config.q_star;
  s.final_activation = config.final_activation;
  return s;
}

NetworkSpec lpe_network(const LpeConfig& config) {
  NetworkSpec s = NetworkSpec::uniform(config.hidden_layers, config.width, config.activation);
  s.final_activation = Activation::step(config.threshold);
  return s;
}

std::vector<ExperimentRecord> run_sweep(const SweepConfig& config, int threads) {
  struct Cell {
    int n, L;
    const Activation* act;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const Activation& act : config.activations)
    for (int L : config.depths)
      for (int n : config.widths)
        for (std::uint64_t seed : config.seeds) cells.push_back({n, L, &act, seed});

  if (threads <= 0) threads = default_thread_count();
  const int inner = cells.size() >= static_cast<std::size_t>(threads) ? 1 : threads;
  const std::size_t per_cell = config.estimators.size();
  std::vector<ExperimentRecord> rows(cells.size() * per_cell);

  parallel_for(
      cells.size(),
      [&](std::size_t c) {
        const Cell& cell = cells[c];
        const NetworkSpec spec = sweep_network(config, cell.n, cell.L, *cell.act);
        const Weights w = init_weights(spec, {derive_seed(cell.seed, kTagNetwork), 0});
        const McResult truth = ground_truth(spec, w, config.truth_samples, {derive_seed(cell.seed, kTagTruth), 0}, inner);
        const double scale = mean_of(truth.variance);
        const std::string id = "n" + std::to_string(cell.n) + "-L" + std::to_string(cell.L) + "-" + cell.act->name();
        for (std::size_t e = 0; e < per_cell; ++e) {
          const EstimatorSpec& est = config.estimators[e];
          ExperimentRecord& r = rows[c * per_cell + e];
          const auto t0 = std::chrono::steady_clock::now();
          Eigen::VectorXd estimate;
          if (est.method == "mc") {
            estimate = monte_carlo_estimate(spec, w, est.samples, {derive_seed(cell.seed, kTagSampling), 0}, inner).mean;
            r.flops = flops_mc(spec, est.samples);
            r.variant = "none";
          } else {
            const EstimatorConfig ec = estimator_config(est.K, est.variant);
            estimate = propagate(spec, w, ec).estimate;
            r.flops = flops_estimator(spec, ec);
            r.variant = to_string(est.variant);
          }
          r.wall_ms = config.timing ? elapsed_ms(t0) : 0.0;
          r.config_id = id;
          r.seed = cell.seed;
          r.n = cell.n;
          r.L = cell.L;
          r.activation = cell.act->name();
          r.estimator = est.tag();
          r.K = est.K;
          r.samples = est.samples;
          r.digest = estimate_digest(estimate);
          r.mse = (estimate - truth.mean).squaredNorm() / cell.n;
          r.variance_normalized_mse = scale > 0.0 ? r.mse / scale : std::numeric_limits<double>::quiet_NaN();
          r.truth_noise = truth.std_error.squaredNorm() / cell.n;
        }
      },
      threads);
  return rows;
}

int probability_bucket(double p) {
  if (!(p > 0.0)) throw InvalidArgument("probability bucket needs p > 0");
  return static_cast<int>(std::floor(std::log10(p) + 0.5));
}

Eigen::VectorXd cumulant_tail_estimate(const Activation& final, const Eigen::VectorXd& mean,
                                       const Eigen::VectorXd& variance, const Eigen::VectorXd& kappa3) {
  const int n = static_cast<int>(mean.size());
  constexpr int K = 3;
  Eigen::VectorXd var = variance.cwiseMax(kSigma2Min);
  auto slice = [n](const IntVec& pattern, const Eigen::VectorXd& v) {
    DiagSlice s(pattern, n);
    std::copy(v.data(), v.data() + n, s.data.begin());
    return s;
  };
  detail::PreActivationSlices pre([&](const IntVec& pattern) -> std::optional<DiagSlice> {
    if (pattern == IntVec{2}) return slice(pattern, var);
    if (pattern == IntVec{3}) return slice(pattern, kappa3);
    return std::nullopt;
  });
  const detail::HermiteTable h(final, 1, 2 * K - 1, mean, var, kDefaultQuadratureNodes);
  const DiagSlice out = detail::power_cumulant(IntVec{1}, h, pre, K, n);
  return Eigen::Map<const Eigen::VectorXd>(out.data.data(), n);
}

std::vector<LpeRecord> run_lpe(const LpeConfig& config, int threads) {
  const NetworkSpec spec = lpe_network(config);
  const EstimatorConfig ec = estimator_config(config.K, config.variant);
  const double kprop_flops = flops_estimator(spec, ec);
  const double mc_flops = flops_mc(spec, config.mc_samples);
  if (threads <= 0) threads = default_thread_count();
  const int inner = config.seeds.size() >= static_cast<std::size_t>(threads) ? 1 : threads;
  std::vector<std::vector<LpeRecord>> per_seed(config.seeds.size());

  parallel_for(
      config.seeds.size(),
      [&](std::size_t si) {
        const std::uint64_t seed = config.seeds[si];
        const Weights w = init_weights(spec, {derive_seed(seed, kTagNetwork), 0});
        const McResult truth = ground_truth(spec, w, config.truth_samples, {derive_seed(seed, kTagTruth), 0}, inner);
        const McResult mc = monte_carlo_estimate(spec, w, config.mc_samples, {derive_seed(seed, kTagSampling), 0}, inner);
        const Moments& pre = *mc.pre_final;
        const Activation& final = *spec.final_activation;
        const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(config.width);
        const std::vector<Eigen::VectorXd> est{
            propagate(spec, w, ec).estimate,
            mc.mean,
            cumulant_tail_estimate(final, pre.mean, pre.variance(), zeros),
            cumulant_tail_estimate(final, pre.mean, pre.variance(), pre.third_cumulant()),
            zeros,
        };
        const std::vector<double> flops{kprop_flops, mc_flops, mc_flops, mc_flops, 0.0};

        std::map<int, std::vector<LpeRecord>> buckets;
        for (int i = 0; i < config.width; ++i) {
          const double p = truth.mean[i];
          if (!(p > 0.0)) continue;
          const int b = probability_bucket(p);
          auto& recs = buckets[b];
          if (recs.empty())
            for (std::size_t m = 0; m < kLpeMethods.size(); ++m)
              recs.push_back({seed, b, kLpeMethods[m], 0, 0.0, 0.0, 0.0, flops[m]});
          for (std::size_t m = 0; m < kLpeMethods.size(); ++m) {
            const double e = est[m][i] - p;
            recs[m].count += 1;
            recs[m].sum_sq_error += e * e;
            recs[m].sum_sq_prob += p * p;
          }
        }
        for (auto it = buckets.rbegin(); it != buckets.rend(); ++it)
          for (LpeRecord& r : it->second) {
            r.relative_rmse = std::sqrt(r.sum_sq_error / r.sum_sq_prob);
            per_seed[si].push_back(r);
          }
      },
      threads);

  std::vector<LpeRecord> rows;
  for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string estimate_digest(const Eigen::VectorXd& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    unsigned char bytes[8];
    std::memcpy(bytes, &v[i], 8);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string sweep_csv(const std::vector<ExperimentRecord>& rows) {
  std::ostringstream os;
  os << "schema,config_id,seed,n,L,activation,estimator,K,variant,samples,digest,flops,mse,"
        "variance_normalized_mse,truth_noise,wall_ms\n";
  for (const auto& r : rows) {
    os << kCsvSchemaVersion << ',' << csv_field(r.config_id) << ',' << r.seed << ',' << r.n << ',' << r.L << ','
       << csv_field(r.activation) << ',' << csv_field(r.estimator) << ',' << r.K << ',' << r.variant << ','
       << r.samples << ',' << r.digest << ',' << format_double(r.flops) << ',' << format_double(r.mse) << ','
       << format_double(r.variance_normalized_mse) << ',' << format_double(r.truth_noise) << ','
       << format_double(r.wall_ms) << '\n';
  }
  return os.str();
}

std::string lpe_csv(const std::vector<LpeRecord>& rows) {
  std::ostringstream os;
  os << "schema,seed,bucket,method,count,sum_sq_error,sum_sq_prob,relative_rmse,flops\n";
  for (const auto& r : rows)
    os << kCsvSchemaVersion << ',' << r.seed << ',' << r.bucket << ',' << r.method << ',' << r.count << ','
       << format_double(r.sum_sq_error) << ',' << format_double(r.sum_sq_prob) << ','
       << format_double(r.relative_rmse) << ',' << format_double(r.flops) << '\n';
  return os.str();
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("CSV is missing column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      any = true;
    } else if (c == '\n') {
      fields.push_back(std::move(cur));
      cur.clear();
      lines.push_back(std::move(fields));
      fields.clear();
      any = false;
    } else if (c != '\r') {
      cur += c;
      any = true;
    }
  }
  if (quoted) throw ConfigError("CSV has an unterminated quote");
  if (any) {
    fields.push_back(std::move(cur));
    lines.push_back(std::move(fields));
  }
  if (lines.empty()) throw ConfigError("CSV is empty");
  CsvTable t;
  t.header = std::move(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() != t.header.size()) throw ConfigError("CSV row " + std::to_string(i) + " has the wrong width");
    t.rows.push_back(std::move(lines[i]));
  }
  return t;
}

MeanSe mean_se(const std::vector<double>& v) {
  if (v.empty()) throw InvalidArgument("mean_se needs at least one value");
  MeanSe r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("slope needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("CSV field '" + s + "' is not a number");
  }
}

json stat_json(const MeanSe& m) {
  return {{"mean", m.mean}, {"se", m.se ? json(*m.se) : json(nullptr)}};
}

std::string se_field(const MeanSe& m) { return m.se ? format_double(*m.se) : ""; }

Report sweep_report(const CsvTable& t) {
  const int c_id = t.column("config_id"), c_n = t.column("n"), c_L = t.column("L"), c_act = t.column("activation"),
            c_est = t.column("estimator"), c_K = t.column("K"), c_var = t.column("variant"),
            c_s = t.column("samples"), c_fl = t.column("flops"), c_mse = t.column("mse"),
            c_vn = t.column("variance_normalized_mse"), c_tn = t.column("truth_noise");
  t.column("seed");

  struct Group {
    std::vector<std::string> first;
    std::vector<double> mse, vn, flops, noise;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (const auto& row : t.rows) {
    const auto key = std::make_pair(row[c_id], row[c_est]);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) {
      order.push_back(key);
      it->second.first = row;
    }
    it->second.mse.push_back(to_double(row[c_mse]));
    it->second.vn.push_back(to_double(row[c_vn]));
    it->second.flops.push_back(to_double(row[c_fl]));
    it->second.noise.push_back(to_double(row[c_tn]));
  }

  struct Cell {
    std::string estimator, activation;
    int n, L;
    MeanSe mse, vn, flops;
  };
  std::vector<Cell> cells;
  json jc = json::array();
  for (const auto& key : order) {
    const Group& g = groups.at(key);
    const auto& r = g.first;
    Cell cell{r[c_est], r[c_act], static_cast<int>(to_double(r[c_n])), static_cast<int>(to_double(r[c_L])),
              mean_se(g.mse), mean_se(g.vn), mean_se(g.flops)};
    jc.push_back({{"configId", r[c_id]},
                  {"n", cell.n},
                  {"L", cell.L},
                  {"activation", cell.activation},
                  {"estimator", cell.estimator},
                  {"K", static_cast<int>(to_double(r[c_K]))},
                  {"variant", r[c_var]},
                  {"samples", static_cast<std::uint64_t>(to_double(r[c_s]))},
                  {"seeds", g.mse.size()},
                  {"mse", stat_json(cell.mse)},
                  {"varianceNormalizedMse", stat_json(cell.vn)},
                  {"flops", stat_json(cell.flops)},
                  {"truthNoise", mean_se(g.noise).mean}});
    cells.push_back(std::move(cell));
  }

  // Width and depth series per (estimator, activation, fixed other axis).
  auto series = [&](bool by_width) {
    std::map<std::tuple<std::string, std::string, int>, std::vector<const Cell*>> m;
    for (const Cell& c : cells) m[{c.estimator, c.activation, by_width ? c.L : c.n}].push_back(&c);
    for (auto& [k, v] : m)
      std::stable_sort(v.begin(), v.end(),
                       [&](const Cell* a, const Cell* b) { return by_width ? a->n < b->n : a->L < b->L; });
    return m;
  };
  json slopes = json::array();
  std::ostringstream width_csv, depth_csv, flops_csv;
  width_csv << "estimator,activation,L,n,vnmse_mean,vnmse_se,mse_mean,mse_se\n";
  depth_csv << "estimator,activation,n,L,vnmse_mean,vnmse_se,mse_mean,mse_se\n";
  flops_csv << "estimator,activation,n,L,flops,vnmse_mean,vnmse_se,mse_mean,mse_se\n";
  for (const auto& [k, v] : series(true)) {
    std::vector<double> xs, ys;
    for (const Cell* c : v) {
      width_csv << csv_field(c->estimator) << ',' << csv_field(c->activation) << ',' << c->L << ',' << c->n << ','
                << format_double(c->vn.mean) << ',' << se_field(c->vn) << ',' << format_double(c->mse.mean) << ','
                << se_field(c->mse) << '\n';
      xs.push_back(c->n);
      ys.push_back(c->vn.mean);
    }
    if (xs.size() < 2 || std::any_of(ys.begin(), ys.end(), [](double y) { return !(y > 0.0); })) continue;
    json s{{"estimator", std::get<0>(k)}, {"activation", std::get<1>(k)}, {"L", std::get<2>(k)}, {"widths", xs},
           {"slope", loglog_slope(xs, ys)}};
    if (xs.size() >= 3)
      s["slopeLast3"] = loglog_slope(std::vector<double>(xs.end() - 3, xs.end()), std::vector<double>(ys.end() - 3, ys.end()));
    else
      s["slopeLast3"] = nullptr;
    slopes.push_back(std::move(s));
  }
  for (const auto& [k, v] : series(false))
    for (const Cell* c : v)
      depth_csv << csv_field(c->estimator) << ',' << csv_field(c->activation) << ',' << c->n << ',' << c->L << ','
                << format_double(c->vn.mean) << ',' << se_field(c->vn) << ',' << format_double(c->mse.mean) << ','
                << se_field(c->mse) << '\n';
  for (const Cell& c : cells)
    flops_csv << csv_field(c.estimator) << ',' << csv_field(c.activation) << ',' << c.n << ',' << c.L << ','
              << format_double(c.flops.mean) << ',' << format_double(c.vn.mean) << ',' << se_field(c.vn) << ','
              << format_double(c.mse.mean) << ',' << se_field(c.mse) << '\n';

  Report rep;
  json j{{"kind", "sweep"}, {"schema", kCsvSchemaVersion}, {"cells", jc}, {"widthSlopes", slopes}};
  rep.summary_json = j.dump(2) + "\n";
  rep.figures["mse_vs_width"] = width_csv.str();
  rep.figures["mse_vs_depth"] = depth_csv.str();
  rep.figures["mse_vs_flops"] = flops_csv.str();
  return rep;
}

Report lpe_report(const CsvTable& t) {
  const int c_seed = t.column("seed"), c_b = t.column("bucket"), c_m = t.column("method"), c_n = t.column("count"),
            c_se = t.column("sum_sq_error"), c_sp = t.column("sum_sq_prob"), c_fl = t.column("flops");
  struct Agg {
    int count = 0;
    double sse = 0.0, ssp = 0.0, flops = 0.0;
    std::set<std::string> seeds;
  };
  std::map<int, std::map<std::string, Agg>> agg;
  for (const auto& row : t.rows) {
    Agg& a = agg[static_cast<int>(to_double(row[c_b]))][row[c_m]];
    a.count += static_cast<int>(to_double(row[c_n]));
    a.sse += to_double(row[c_se]);
    a.ssp += to_double(row[c_sp]);
    a.flops = to_double(row[c_fl]);
    a.seeds.insert(row[c_seed]);
  }
  json buckets = json::array();
  std::ostringstream fig;
  fig << "bucket,lower,upper,method,count,relative_rmse,flops\n";
  for (auto it = agg.rbegin(); it != agg.rend(); ++it) {
    const int b = it->first;
    const double lo = std::pow(10.0, b - 0.5), hi = std::pow(10.0, b + 0.5);
    json methods = json::object();
    for (const auto& [m, a] : it->second) {
      const double rel = std::sqrt(a.sse / a.ssp);
      methods[m] = {{"count", a.count}, {"seeds", a.seeds.size()}, {"relativeRmse", rel}, {"flops", a.flops}};
      fig << b << ',' << format_double(lo) << ',' << format_double(hi) << ',' << m << ',' << a.count << ','
          << format_double(rel) << ',' << format_double(a.flops) << '\n';
    }
    buckets.push_back({{"bucket", b}, {"lower", lo}, {"upper", hi}, {"methods", methods}});
  }
  Report rep;
  json j{{"kind", "lpe"}, {"schema", kCsvSchemaVersion}, {"buckets", buckets}};
  rep.summary_json = j.dump(2) + "\n";
  rep.figures["mse_vs_prob"] = fig.str();
  return rep;
}

}  // namespace

Report make_report(const std::string& csv_text) {
  const CsvTable t = parse_csv(csv_text);
  if (std::find(t.header.begin(), t.header.end(), "bucket") != t.header.end()) return lpe_report(t);
  return sweep_report(t);
}

}  // namespace kprop
