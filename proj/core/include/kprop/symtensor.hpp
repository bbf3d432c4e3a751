#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace kprop {

// Dense tensor of rank r over R^n holding n^r doubles in row-major order.
// Symmetry is a convention of the producer; no packed storage is used.
class SymTensor {
public:
  SymTensor() = default;
  SymTensor(int rank, int dim);

  static SymTensor scalar(double value, int dim);
  static SymTensor identity(int dim);
  static SymTensor from_vector(const Eigen::VectorXd& v);
  static SymTensor from_matrix(const Eigen::MatrixXd& m);

  int rank() const { return rank_; }
  int dim() const { return dim_; }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }
  double& at(std::span<const int> idx) { return data_[flat_index(idx)]; }
  double at(std::span<const int> idx) const { return data_[flat_index(idx)]; }
  std::size_t flat_index(std::span<const int> idx) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Eigen::VectorXd to_vector() const;
  Eigen::MatrixXd to_matrix() const;

  double frobenius_norm() const;
  // Largest |T_i - T_{sigma(i)}| over adjacent transpositions.
  double max_asymmetry() const;
  void symmetrize();

  SymTensor& operator+=(const SymTensor& o);
  SymTensor& operator-=(const SymTensor& o);
  SymTensor& operator*=(double c);

private:
  int rank_ = 0;
  int dim_ = 0;
  std::vector<double> data_{0.0};
};

SymTensor operator+(SymTensor a, const SymTensor& b);
SymTensor operator-(SymTensor a, const SymTensor& b);
SymTensor operator*(double c, SymTensor a);

double inner(const SymTensor& a, const SymTensor& b);

// (T . W)_{i_1..i_r} = sum_j W_{i_1 j_1} ... W_{i_r j_r} T_{j_1..j_r}.
SymTensor symmetric_contract(const SymTensor& t, const Eigen::MatrixXd& w);

// Contracts the first two indices; applied `times` times.
SymTensor trace(const SymTensor& t, int times = 1);

// g_M(T)_{i_1..i_{r+2}} = sum_{u<v} M_{i_u i_v} T_{i without u,v}; applied `times` times.
SymTensor cup(const SymTensor& t, const Eigen::MatrixXd& m, int times = 1);
SymTensor cup_identity(const SymTensor& t, int times = 1);

// Reduced-rank restriction of a rank-r tensor to index patterns with repetition
// vector u (entries may be zero or unsorted). Entries with repeated indices are zero.
struct DiagSlice {
  std::vector<int> pattern;
  int dim = 0;
  std::vector<double> data;

  DiagSlice() = default;
  DiagSlice(std::vector<int> pattern, int dim);

  int blocks() const { return static_cast<int>(pattern.size()); }
  int order() const;
  std::size_t flat_index(std::span<const int> idx) const;
  double at(std::span<const int> idx) const { return data[flat_index(idx)]; }
  double& at(std::span<const int> idx) { return data[flat_index(idx)]; }
  // Sets every entry with a repeated index to zero.
  void zero_repeated();
  double frobenius_norm() const;
};

DiagSlice diagonal_slice(const SymTensor& t, std::span<const int> u);

// Pseudoinverse of the slice map. Positions with equal pattern entries are
// averaged over their permutations unless the caller asserts the slice is
// already symmetric in them.
SymTensor embed_slice(const DiagSlice& s, bool assume_symmetric = false);
// Sum of embeddings of slices sharing one rank.
SymTensor embed_slices(std::span<const DiagSlice> slices, int rank, int dim, bool assume_symmetric);

// tr^t applied to the embedding of one slice, computed at reduced rank.
SymTensor trace_of_diagonal(const DiagSlice& s, int t);

// Slice with pattern u of g_M^s(T), computed without forming the cup.
DiagSlice slice_of_cup(const SymTensor& t, const Eigen::MatrixXd& m, std::span<const int> u, int s);

// Multigraph on b vertices given as a list of edges (a <= c; a == c is a self-loop).
using Multigraph = std::vector<std::pair<int, int>>;
const std::vector<Multigraph>& multigraphs(int b, int s);
std::vector<int> multigraph_degrees(const Multigraph& g, int b);
bool totally_disconnected(const Multigraph& g);

// Weight of T (.)_g M in the slice of g^s(T), with g^s the s-fold cup.
double delta_cup_coefficient(std::span<const int> lambda, const Multigraph& g);
// Weight of the reduced slice for self-loop graph g in tr^s of a slice embedding.
double trace_delta_coefficient(std::span<const int> lambda, const Multigraph& g);

// Coefficient of g^t tr^{s+t} T in the harmonic part h_{r-2s} of a rank-r tensor.
double harmonic_coefficient(int r, int n, int s, int t);

// Returns [h_r, h_{r-2}, ...]; part s has rank r - 2s and T = sum_s g_I^s(h_{r-2s}).
std::vector<SymTensor> harmonic_decompose(const SymTensor& t);
SymTensor harmonic_reconstruct(const std::vector<SymTensor>& parts);

// Part of a rank-r tensor made of harmonics of degree <= r - 2s, in reduced form:
// the rank-(r-2s) tensor eta whose cup g^s(eta) is that part.
// `traces(m)` must return tr^m T for m >= s.
SymTensor harmonic_projection(int r, int n, int s, const std::function<SymTensor(int)>& traces);

}  // namespace kprop
