#include "kprop/hermite.hpp"

#include "kprop/errors.hpp"
#include "util.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

namespace kprop {

namespace {

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

std::vector<double> poly_pow(const std::vector<double>& a, int p) {
  std::vector<double> out{1.0};
  for (int i = 0; i < p; ++i) out = poly_mul(out, a);
  return out;
}

// E[Y^j] for Y ~ N(mu, sigma2), j = 0..max.
std::vector<double> normal_moments(int max, double mu, double sigma2) {
  std::vector<double> m(max + 1, 0.0);
  m[0] = 1.0;
  if (max >= 1) m[1] = mu;
  for (int i = 1; i < max; ++i) m[i + 1] = mu * m[i] + i * sigma2 * m[i - 1];
  return m;
}

double polynomial_coeff(const std::vector<double>& c, int p, int k, double mu, double sigma2) {
  const auto q = poly_pow(c, p);
  const int deg = static_cast<int>(q.size()) - 1;
  if (k > deg) return 0.0;
  const auto m = normal_moments(deg - k, mu, sigma2);
  double acc = 0.0;
  for (int j = k; j <= deg; ++j) acc += q[j] * detail::pochhammer(j - k + 1, k) * m[j - k];
  return acc;
}

double relu_coeff(int p, int k, double mu, double sigma) {
  const double a = mu / sigma;
  const double pdf = normal_pdf(a), cdf = normal_cdf(a);
  const double pf = detail::factorial(p);
  if (k == p) return pf * cdf;
  if (k > p) {
    const int j = k - p;
    const double sign = ((j - 1) % 2 == 0) ? 1.0 : -1.0;
    return pf * sign * std::pow(sigma, -j) * hermite_he(j - 1, a) * pdf;
  }
  const int d = p - k;
  const double lead = detail::pochhammer(d + 1, k);
  double p1 = 0.0, p2 = 0.0;
  for (int j = 0; j <= d; ++j) {
    double binom = 1.0;
    for (int t = 1; t <= j; ++t) binom = binom * (d - j + t) / t;
    const double apow = std::pow(a, d - j);
    double inner = 0.0;
    for (int m = 0; 2 * m <= j - 1; ++m) {
      double b2 = 1.0;
      for (int t = 1; t <= 2 * m; ++t) b2 = b2 * (j - 2 * m + t) / t;
      inner += b2 * detail::double_factorial(2 * m - 1) * hermite_he(j - 2 * m - 1, -a);
    }
    p1 += binom * apow * inner;
    if (j % 2 == 0) p2 += binom * apow * detail::double_factorial(j - 1);
  }
  return std::pow(sigma, d) * lead * (p1 * pdf + p2 * cdf);
}

double threshold_coeff(double c, int k, double mu, double sigma) {
  const double beta = (mu - c) / sigma;
  if (k == 0) return normal_cdf(beta);
  const double sign = ((k - 1) % 2 == 0) ? 1.0 : -1.0;
  return std::pow(sigma, -k) * sign * hermite_he(k - 1, beta) * normal_pdf(beta);
}

double quadrature_coeff(const Activation& act, int p, int k, double mu, double sigma, int nodes) {
  const auto& rule = gauss_hermite(nodes);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i];
    acc += rule.weights[i] * std::pow(act(mu + sigma * x), p) * hermite_he(k, x);
  }
  return acc * std::pow(sigma, -k);
}

// Orthonormal Hermite values h_{m-1}, h_m at x with a shared log2 scale.
struct ScaledPair {
  double prev, cur;
  int scale;
};

ScaledPair orthonormal_hermite(int m, double x) {
  double h0 = 1.0, h1 = x;
  int scale = 0;
  if (m == 0) return {0.0, 1.0, 0};
  for (int k = 1; k < m; ++k) {
    const double h2 = (x * h1 - std::sqrt(static_cast<double>(k)) * h0) / std::sqrt(k + 1.0);
    h0 = h1;
    h1 = h2;
    if (std::abs(h1) > 0x1p500) {
      h0 = std::ldexp(h0, -500);
      h1 = std::ldexp(h1, -500);
      scale += 500;
    }
  }
  return {h0, h1, scale};
}

GaussHermiteRule build_rule(int m) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sub(m - 1);
  for (int k = 1; k < m; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("Gauss-Hermite eigenvalue solve failed");
  GaussHermiteRule rule;
  rule.nodes.resize(m);
  rule.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    double x = es.eigenvalues()[i];
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      const auto h = orthonormal_hermite(m, x);
      const double step = h.cur / (std::sqrt(static_cast<double>(m)) * h.prev);
      x -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(x))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw NumericalError("Gauss-Hermite Newton iteration did not converge");
    const auto h = orthonormal_hermite(m, x);
    // 1 / (m h_{m-1}^2) with h_{m-1} = prev * 2^scale.
    const double w = std::ldexp(1.0 / (m * h.prev * h.prev), -2 * h.scale);
    rule.nodes[i] = x;
    rule.weights[i] = w;
  }
  return rule;
}

}  // namespace

Activation Activation::polynomial(std::vector<double> c) {
  if (c.size() > 9) throw InvalidArgument("polynomial activation degree exceeds 8");
  return {ActKind::polynomial, 0.0, std::move(c)};
}

Activation Activation::parse(const std::string& text) {
  if (text == "relu") return relu();
  if (text == "gelu") return gelu();
  if (text == "tanh") return tanh();
  if (text == "identity") return identity();
  auto tail = [&](const std::string& prefix) { return text.substr(prefix.size()); };
  try {
    if (text.rfind("threshold:", 0) == 0) {
      const double c = std::stod(tail("threshold:"));
      if (!std::isfinite(c)) throw InvalidArgument("threshold must be finite");
      return step(c);
    }
    if (text.rfind("poly:", 0) == 0) {
      std::vector<double> c;
      std::stringstream ss(tail("poly:"));
      std::string item;
      while (std::getline(ss, item, ',')) c.push_back(std::stod(item));
      if (c.empty()) throw InvalidArgument("empty polynomial activation");
      return polynomial(std::move(c));
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) throw;
    throw InvalidArgument("cannot parse activation '" + text + "'");
  }
  throw InvalidArgument("unknown activation '" + text + "'");
}

std::string Activation::name() const {
  switch (kind) {
    case ActKind::relu: return "relu";
    case ActKind::gelu: return "gelu";
    case ActKind::tanh: return "tanh";
    case ActKind::identity: return "identity";
    case ActKind::threshold: {
      std::ostringstream os;
      os.precision(17);
      os << "threshold:" << threshold;
      return os.str();
    }
    case ActKind::polynomial: {
      std::ostringstream os;
      os.precision(17);
      os << "poly:";
      for (std::size_t i = 0; i < coeffs.size(); ++i) os << (i ? "," : "") << coeffs[i];
      return os.str();
    }
  }
  return "unknown";
}

double Activation::operator()(double z) const {
  switch (kind) {
    case ActKind::relu: return z > 0.0 ? z : 0.0;
    case ActKind::gelu: return z * normal_cdf(z);
    case ActKind::tanh: return std::tanh(z);
    case ActKind::identity: return z;
    case ActKind::threshold: return z > threshold ? 1.0 : 0.0;
    case ActKind::polynomial: {
      double acc = 0.0;
      for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * z + *it;
      return acc;
    }
  }
  return 0.0;
}

double Activation::derivative(double z) const {
  switch (kind) {
    case ActKind::relu: return z > 0.0 ? 1.0 : 0.0;
    case ActKind::gelu: return normal_cdf(z) + z * normal_pdf(z);
    case ActKind::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActKind::identity: return 1.0;
    case ActKind::threshold: return 0.0;
    case ActKind::polynomial: {
      double acc = 0.0;
      for (std::size_t j = coeffs.size(); j-- > 1;) acc = acc * z + j * coeffs[j];
      return acc;
    }
  }
  return 0.0;
}

const GaussHermiteRule& gauss_hermite(int m) {
  if (m < 2 || m > kMaxQuadratureNodes) throw InvalidArgument("Gauss-Hermite node count out of range");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[m];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(build_rule(m));
  return *slot;
}

double hermite_he(int k, double x) {
  if (k < 0) return 0.0;
  double h0 = 1.0, h1 = x;
  if (k == 0) return h0;
  for (int j = 1; j < k; ++j) {
    const double h2 = x * h1 - j * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double hermite_coeff(const Activation& act, int p, int k, double mu, double sigma2, int nodes) {
  if (p < 1 || k < 0) throw InvalidArgument("Hermite coefficient needs p >= 1 and k >= 0");
  if (!std::isfinite(mu) || !std::isfinite(sigma2) || sigma2 < 0.0)
    throw NumericalError("Hermite coefficient requested at an invalid mean or variance");
  if (act.kind == ActKind::identity) return polynomial_coeff({0.0, 1.0}, p, k, mu, sigma2);
  if (act.kind == ActKind::polynomial) return polynomial_coeff(act.coeffs, p, k, mu, sigma2);
  if (sigma2 < kSigma2Min) return k == 0 ? std::pow(act(mu), p) : 0.0;
  const double sigma = std::sqrt(sigma2);
  switch (act.kind) {
    case ActKind::relu: return relu_coeff(p, k, mu, sigma);
    case ActKind::threshold: return threshold_coeff(act.threshold, k, mu, sigma);
    case ActKind::gelu:
    case ActKind::tanh: return quadrature_coeff(act, p, k, mu, sigma, nodes);
    default: break;
  }
  throw InvalidArgument("unsupported activation");
}

double gaussian_moment(const Activation& act, int p, double mu, double sigma2, int nodes) {
  return hermite_coeff(act, p, 0, mu, sigma2, nodes);
}

}  // namespace kprop
