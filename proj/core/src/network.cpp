#include "kprop/network.hpp"

#include "kprop/errors.hpp"
#include "kprop/thread_pool.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace kprop {

namespace {

void apply_activation(const Activation& act, Eigen::MatrixXd& z) {
  if (act.kind == ActKind::relu) {
    z = z.cwiseMax(0.0);
  } else if (act.kind != ActKind::identity) {
    z = z.unaryExpr([&](double v) { return act(v); });
  }
}

bool all_relu(const NetworkSpec& spec) {
  return std::all_of(spec.activations.begin(), spec.activations.end(),
                     [](const Activation& a) { return a.kind == ActKind::relu; });
}

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void write_f64(std::ostream& os, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  bits = to_le(bits);
  os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

double read_f64(std::istream& is) {
  std::uint64_t bits;
  if (!is.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw IoError("weight file truncated");
  bits = to_le(bits);
  double x;
  std::memcpy(&x, &bits, sizeof x);
  return x;
}

}  // namespace

std::string to_string(InitScheme s) { return s == InitScheme::he ? "he" : "critical"; }

InitScheme parse_init_scheme(const std::string& s) {
  if (s == "he") return InitScheme::he;
  if (s == "critical") return InitScheme::critical;
  throw InvalidArgument("unknown init scheme '" + s + "'");
}

NetworkSpec NetworkSpec::uniform(int layers, int width, const Activation& act) {
  NetworkSpec s;
  s.hidden_layers = layers;
  s.width = width;
  s.activations.assign(std::max(layers, 0), act);
  return s;
}

void NetworkSpec::validate() const {
  if (hidden_layers < 0) throw InvalidArgument("hidden layer count must be non-negative");
  if (width < 1) throw InvalidArgument("width must be positive");
  if (static_cast<int>(activations.size()) != hidden_layers)
    throw InvalidArgument("activation list length must equal the hidden layer count");
  if (!(q_star > 0.0) || !std::isfinite(q_star)) throw InvalidArgument("q* must be positive");
}

void Weights::check(const NetworkSpec& spec) const {
  spec.validate();
  const std::size_t layers = spec.hidden_layers + 1;
  if (w.size() != layers) throw InvalidArgument("weight list length must be L+1");
  for (const auto& m : w)
    if (m.rows() != spec.width || m.cols() != spec.width) throw InvalidArgument("weight matrix must be n x n");
  if (!b.empty()) {
    if (b.size() != layers) throw InvalidArgument("bias list length must be L+1");
    for (const auto& v : b)
      if (v.size() != spec.width) throw InvalidArgument("bias vector must have length n");
  }
}

CriticalScales critical_scales(const Activation& act, double q_star, int nodes) {
  const auto& rule = gauss_hermite(nodes);
  const double s = std::sqrt(q_star);
  double d2 = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double d = act.derivative(s * rule.nodes[i]);
    d2 += rule.weights[i] * d * d;
  }
  if (!(d2 > 0.0) || !std::isfinite(d2))
    throw NumericalError("critical initialization needs E[phi'(sqrt(q*) Z)^2] > 0");
  const double sw2 = 1.0 / d2;
  double sb2 = q_star - sw2 * gaussian_moment(act, 2, 0.0, q_star, nodes);
  if (sb2 < -1e-12) throw NumericalError("critical initialization has no solution with a real bias scale");
  return {sw2, std::max(sb2, 0.0)};
}

std::vector<CriticalScales> init_scales(const NetworkSpec& spec) {
  spec.validate();
  const int layers = spec.hidden_layers + 1;
  std::vector<CriticalScales> out(layers, {1.0, 0.0});
  if (spec.init == InitScheme::he) {
    if (all_relu(spec)) {
      for (auto& s : out) s.sigma_w2 = 2.0;
      return out;
    }
    for (int l = 1; l < layers; ++l)
      out[l].sigma_w2 = 1.0 / gaussian_moment(spec.activations[l - 1], 2, 0.0, 1.0);
    return out;
  }
  out[0].sigma_w2 = spec.q_star;
  for (int l = 1; l < layers; ++l) {
    out[l] = critical_scales(spec.activations[l - 1], spec.q_star);
    if (!spec.use_bias) out[l].sigma_b2 = 0.0;
  }
  return out;
}

Weights init_weights(const NetworkSpec& spec, const RngSpec& rng) {
  const auto scales = init_scales(spec);
  const int n = spec.width;
  Rng gen(rng);
  Weights wts;
  for (const auto& sc : scales) {
    const double sw = std::sqrt(sc.sigma_w2 / n);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = sw * gen.normal();
    wts.w.push_back(std::move(m));
    if (spec.use_bias) {
      const double sb = std::sqrt(sc.sigma_b2);
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v[i] = sb * gen.normal();
      wts.b.push_back(std::move(v));
    }
  }
  return wts;
}

Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const Weights& weights, const Eigen::MatrixXd& x,
                              Eigen::MatrixXd* pre_final) {
  if (x.rows() != spec.width) throw InvalidArgument("input dimension does not match the network width");
  Eigen::MatrixXd h = x;
  for (int l = 0; l <= spec.hidden_layers; ++l) {
    Eigen::MatrixXd z = weights.w[l] * h;
    if (weights.has_bias()) z.colwise() += weights.b[l];
    if (l < spec.hidden_layers) apply_activation(spec.activations[l], z);
    h = std::move(z);
  }
  if (spec.final_activation) {
    if (pre_final) *pre_final = h;
    apply_activation(*spec.final_activation, h);
  }
  return h;
}

Eigen::VectorXd forward(const NetworkSpec& spec, const Weights& weights, const Eigen::VectorXd& x) {
  return forward_batch(spec, weights, x);
}

Moments::Moments(int dim)
    : mean(Eigen::VectorXd::Zero(dim)), m2(Eigen::VectorXd::Zero(dim)), m3(Eigen::VectorXd::Zero(dim)) {}

void Moments::add_batch(const Eigen::MatrixXd& x) {
  if (x.cols() == 0) return;
  Moments b(static_cast<int>(x.rows()));
  b.count = x.cols();
  b.mean = x.rowwise().mean();
  const Eigen::ArrayXXd d = x.colwise() - b.mean;
  b.m2 = d.square().rowwise().sum();
  b.m3 = d.cube().rowwise().sum();
  merge(b);
}

void Moments::merge(const Moments& o) {
  if (o.count == 0) return;
  if (count == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(count), nb = static_cast<double>(o.count), n = na + nb;
  const Eigen::ArrayXd delta = (o.mean - mean).array();
  m3 = (m3.array() + o.m3.array() + delta.cube() * na * nb * (na - nb) / (n * n) +
        3.0 * delta * (na * o.m2.array() - nb * m2.array()) / n)
           .matrix();
  m2 = (m2.array() + o.m2.array() + delta.square() * na * nb / n).matrix();
  mean = (mean.array() + delta * nb / n).matrix();
  count += o.count;
}

Eigen::VectorXd Moments::variance() const {
  if (count < 2) return Eigen::VectorXd::Zero(mean.size());
  return m2 / static_cast<double>(count - 1);
}

Eigen::VectorXd Moments::third_cumulant() const {
  if (count < 3) return Eigen::VectorXd::Zero(mean.size());
  const double n = static_cast<double>(count);
  return m3 * (n / ((n - 1.0) * (n - 2.0)));
}

McResult monte_carlo_estimate(const NetworkSpec& spec, const Weights& weights, std::uint64_t samples,
                              const RngSpec& rng, int threads) {
  weights.check(spec);
  if (samples < 1) throw InvalidArgument("Monte Carlo needs at least one sample");
  const int n = spec.width;
  const std::size_t shards = (samples + kMcShardSize - 1) / kMcShardSize;
  std::vector<Moments> out(shards, Moments(n));
  std::vector<Moments> pre(spec.final_activation ? shards : 0, Moments(n));
  parallel_for(
      shards,
      [&](std::size_t s) {
        Rng gen(rng.seed, rng.stream + s);
        const std::uint64_t begin = s * kMcShardSize;
        const std::uint64_t count = std::min<std::uint64_t>(kMcShardSize, samples - begin);
        Eigen::MatrixXd x(n, kMcBatch), z;
        for (std::uint64_t done = 0; done < count;) {
          const int b = static_cast<int>(std::min<std::uint64_t>(kMcBatch, count - done));
          if (b != x.cols()) x.resize(n, b);
          for (int c = 0; c < b; ++c)
            for (int i = 0; i < n; ++i) x(i, c) = gen.normal();
          const Eigen::MatrixXd y = forward_batch(spec, weights, x, pre.empty() ? nullptr : &z);
          out[s].add_batch(y);
          if (!pre.empty()) pre[s].add_batch(z);
          done += b;
        }
      },
      threads);
  Moments total(n);
  for (const auto& m : out) total.merge(m);
  McResult r;
  r.samples = samples;
  r.mean = total.mean;
  r.variance = total.variance();
  r.std_error = (r.variance / static_cast<double>(samples)).cwiseSqrt();
  if (!pre.empty()) {
    Moments p(n);
    for (const auto& m : pre) p.merge(m);
    r.pre_final = std::move(p);
  }
  return r;
}

McResult ground_truth(const NetworkSpec& spec, const Weights& weights, std::uint64_t budget, const RngSpec& rng,
                      int threads) {
  return monte_carlo_estimate(spec, weights, budget, rng, threads);
}

void save_network(const std::string& path, const NetworkFile& net) {
  net.weights.check(net.spec);
  if (net.spec.use_bias != net.weights.has_bias()) throw InvalidArgument("bias flag does not match the weights");
  nlohmann::json h;
  h["version"] = kWeightFileVersion;
  h["L"] = net.spec.hidden_layers;
  h["n"] = net.spec.width;
  h["activations"] = nlohmann::json::array();
  for (const auto& a : net.spec.activations) h["activations"].push_back(a.name());
  h["finalActivation"] = net.spec.final_activation ? nlohmann::json(net.spec.final_activation->name()) : nullptr;
  h["useBias"] = net.spec.use_bias;
  h["initScheme"] = to_string(net.spec.init);
  h["qStar"] = net.spec.q_star;
  h["rng"] = {{"algorithm", RngSpec::algorithm}, {"seed", net.rng.seed}, {"stream", net.rng.stream}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << h.dump() << '\n';
  for (std::size_t l = 0; l < net.weights.w.size(); ++l) {
    const auto& m = net.weights.w[l];
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
    if (net.weights.has_bias())
      for (double v : net.weights.b[l]) write_f64(os, v);
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

NetworkFile load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw IoError("missing weight file header");
  NetworkFile net;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("version").get<int>() != kWeightFileVersion) throw IoError("unsupported weight file version");
    auto& s = net.spec;
    s.hidden_layers = h.at("L").get<int>();
    s.width = h.at("n").get<int>();
    for (const auto& a : h.at("activations")) s.activations.push_back(Activation::parse(a.get<std::string>()));
    if (!h.at("finalActivation").is_null())
      s.final_activation = Activation::parse(h.at("finalActivation").get<std::string>());
    s.use_bias = h.at("useBias").get<bool>();
    s.init = parse_init_scheme(h.at("initScheme").get<std::string>());
    s.q_star = h.at("qStar").get<double>();
    net.rng.seed = h.at("rng").at("seed").get<std::uint64_t>();
    net.rng.stream = h.at("rng").at("stream").get<std::uint64_t>();
    s.validate();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed weight file header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid weight file header: ") + e.what());
  }
  const int n = net.spec.width;
  for (int l = 0; l <= net.spec.hidden_layers; ++l) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = read_f64(is);
    net.weights.w.push_back(std::move(m));
    if (net.spec.use_bias) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v[i] = read_f64(is);
      net.weights.b.push_back(std::move(v));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after weight data");
  return net;
}

}  // namespace kprop
