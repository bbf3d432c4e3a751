#pragma once

#include "kprop/combinat.hpp"
#include "kprop/hermite.hpp"
#include "test_support.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

namespace kprop::testing {

struct Point {
  int v;
  int w;
};

inline std::vector<Point> ground_set(const IntVec& k) {
  std::vector<Point> pts;
  for (int v = 0; v < static_cast<int>(k.size()); ++v)
    for (int w = 0; w < k[v]; ++w) pts.push_back({v, w});
  return pts;
}

// Brute force: every set partition of the ground set, keyed by its vector-partition type.
struct DiagramCensus {
  std::map<std::vector<IntVec>, std::uint64_t> by_type;
  std::uint64_t total = 0;
};

inline DiagramCensus census(const IntVec& k, bool connected_only, int mixed_m) {
  const auto pts = ground_set(k);
  const int m = static_cast<int>(pts.size());
  const int r = static_cast<int>(k.size());
  DiagramCensus out;
  for (const IntVec& rgs : set_partitions(m)) {
    const int parts = m == 0 ? 0 : *std::max_element(rgs.begin(), rgs.end()) + 1;
    std::vector<IntVec> blocks(parts, IntVec(r, 0));
    for (int a = 0; a < m; ++a) ++blocks[rgs[a]][pts[a].v];
    bool keep = true;
    if (mixed_m > 0) {
      for (const IntVec& u : blocks) {
        const int size = std::accumulate(u.begin(), u.end(), 0);
        const auto support = std::count_if(u.begin(), u.end(), [](int x) { return x > 0; });
        if (size <= mixed_m && support < 2) keep = false;
      }
    }
    if (connected_only) {
      // Groups are joined by any block touching both.
      if (r > 1 && std::any_of(k.begin(), k.end(), [](int x) { return x == 0; })) {
        keep = false;
      } else {
        std::vector<int> comp(r);
        std::iota(comp.begin(), comp.end(), 0);
        bool changed = true;
        while (changed) {
          changed = false;
          for (const IntVec& u : blocks) {
            int lo = r;
            for (int v = 0; v < r; ++v)
              if (u[v] > 0) lo = std::min(lo, comp[v]);
            for (int v = 0; v < r; ++v)
              if (u[v] > 0 && comp[v] != lo) {
                comp[v] = lo;
                changed = true;
              }
          }
        }
        for (int v = 0; v < r; ++v)
          if (comp[v] != comp[0]) keep = false;
      }
    }
    if (!keep) continue;
    std::sort(blocks.begin(), blocks.end(), std::greater<>());
    ++out.by_type[blocks];
    ++out.total;
  }
  return out;
}

inline std::vector<IntVec> shapes_up_to(int max_total) {
  std::vector<IntVec> out;
  for (int r = 1; r <= 3; ++r)
    for (int total = 0; total <= max_total; ++total)
      for (const auto& k : compositions(total, r)) out.push_back(k);
  return out;
}

// Covariance of relu(Y1), relu(Y2) for a standard bivariate normal with correlation rho,
// by nested adaptive quadrature over the positive quadrant.
inline double relu_covariance_quadrature(double rho) {
  using boost::math::quadrature::gauss_kronrod;
  const double s = std::sqrt(1.0 - rho * rho);
  const double inf = std::numeric_limits<double>::infinity();
  auto outer = [&](double y1) {
    auto inner = [&](double y2) {
      const double z = (y2 - rho * y1) / s;
      return y2 * std::exp(-0.5 * z * z) / (s * std::sqrt(2 * std::numbers::pi));
    };
    return y1 * normal_pdf(y1) * gauss_kronrod<double, 31>::integrate(inner, 0.0, inf, 15, 1e-14);
  };
  const double e12 = gauss_kronrod<double, 31>::integrate(outer, 0.0, inf, 15, 1e-14);
  const double m = 1.0 / std::sqrt(2 * std::numbers::pi);
  return e12 - m * m;
}

inline double relu_covariance_series(double rho, int kmax) {
  double acc = 0.0, f = 1.0;
  for (int k = 1; k <= kmax; ++k) {
    f *= k;
    const double c = hermite_coeff(Activation::relu(), 1, k, 0.0, 1.0);
    acc += c * c * std::pow(rho, k) / f;
  }
  return acc;
}

}  // namespace kprop::testing
