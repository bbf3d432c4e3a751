#pragma once

#include "kprop/symtensor.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace kprop::testing {

inline SymTensor random_symmetric(int rank, int dim, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  SymTensor t(rank, dim);
  for (auto& v : t.data()) v = nd(gen);
  t.symmetrize();
  return t;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(gen);
  return m;
}

inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& gen) {
  Eigen::MatrixXd a = random_matrix(n, n, gen);
  return a * a.transpose() / n + Eigen::MatrixXd::Identity(n, n);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = a.size() == b.size() ? 0.0 : 1e300;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Every composition of `total` into `parts` nonnegative entries.
inline std::vector<std::vector<int>> compositions(int total, int parts) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(parts, 0);
  auto rec = [&](auto&& self, int pos, int rem) -> void {
    if (pos == parts - 1) {
      cur[pos] = rem;
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= rem; ++v) {
      cur[pos] = v;
      self(self, pos + 1, rem - v);
    }
  };
  if (parts == 0) {
    if (total == 0) out.push_back({});
    return out;
  }
  rec(rec, 0, total);
  return out;
}

}  // namespace kprop::testing
