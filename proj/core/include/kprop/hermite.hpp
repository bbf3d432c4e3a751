#pragma once

#include <string>
#include <vector>

namespace kprop {

enum class ActKind { relu, gelu, tanh, identity, threshold, polynomial };

struct Activation {
  ActKind kind = ActKind::relu;
  double threshold = 0.0;            // threshold(c): 1[z > c]
  std::vector<double> coeffs;        // polynomial: sum_j coeffs[j] z^j

  static Activation relu() { return {ActKind::relu, 0.0, {}}; }
  static Activation gelu() { return {ActKind::gelu, 0.0, {}}; }
  static Activation tanh() { return {ActKind::tanh, 0.0, {}}; }
  static Activation identity() { return {ActKind::identity, 0.0, {}}; }
  static Activation step(double c) { return {ActKind::threshold, c, {}}; }
  static Activation polynomial(std::vector<double> c);

  // Accepts relu, gelu, tanh, identity, threshold:<c>, poly:<a0>,<a1>,...
  static Activation parse(const std::string& text);
  std::string name() const;

  double operator()(double z) const;
  double derivative(double z) const;
  bool operator==(const Activation&) const = default;
};

inline constexpr double kSigma2Min = 1e-12;
inline constexpr int kDefaultQuadratureNodes = 100;
inline constexpr int kMaxQuadratureNodes = 512;

struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1 under the standard normal
};

// Roots of He_m with weights (m-1)!/(m He_{m-1}(x)^2). Cached per m.
const GaussHermiteRule& gauss_hermite(int m);

// Probabilist's Hermite polynomial He_k(x).
double hermite_he(int k, double x);

double normal_pdf(double x);
double normal_cdf(double x);

// k-th Hermite coefficient of act^p under N(mu, sigma2): E[(act^p)^{(k)}(Y)].
// Closed forms for relu, threshold and polynomials; Gauss-Hermite with `nodes`
// points otherwise. sigma2 below kSigma2Min uses the deterministic limit.
double hermite_coeff(const Activation& act, int p, int k, double mu, double sigma2,
                     int nodes = kDefaultQuadratureNodes);

// E[act(Y)^p] for Y ~ N(mu, sigma2).
double gaussian_moment(const Activation& act, int p, double mu, double sigma2,
                       int nodes = kDefaultQuadratureNodes);

}  // namespace kprop
