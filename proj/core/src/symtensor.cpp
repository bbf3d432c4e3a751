#include "kprop/symtensor.hpp"

#include "kprop/errors.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <string>

namespace kprop {

using detail::ipow;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_shape(const SymTensor& a, const SymTensor& b) {
  if (a.rank() != b.rank() || a.dim() != b.dim())
    throw InvalidArgument("tensor shape mismatch: rank " + std::to_string(a.rank()) + " vs " +
                          std::to_string(b.rank()) + ", dim " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
}

// Distinct values of J in first-appearance order with their multiplicities.
struct IndexType {
  int count = 0;
  int values[16];
  int mult[16];
};

IndexType index_type(std::span<const int> j) {
  IndexType t;
  for (int v : j) {
    int k = 0;
    while (k < t.count && t.values[k] != v) ++k;
    if (k == t.count) {
      t.values[t.count] = v;
      t.mult[t.count] = 0;
      ++t.count;
    }
    ++t.mult[k];
  }
  return t;
}

// Visits every assignment of distinct type values to slice positions such that
// each position receives a value whose multiplicity equals its pattern entry.
template <class Fn>
void for_each_assignment(const std::vector<int>& pattern, const IndexType& t, int pos, std::vector<int>& idx,
                         std::vector<char>& used, Fn& fn) {
  if (pos == static_cast<int>(pattern.size())) {
    fn(idx);
    return;
  }
  for (int k = 0; k < t.count; ++k) {
    if (used[k] || t.mult[k] != pattern[pos]) continue;
    used[k] = 1;
    idx[pos] = t.values[k];
    for_each_assignment(pattern, t, pos + 1, idx, used, fn);
    used[k] = 0;
  }
}

}  // namespace

SymTensor::SymTensor(int rank, int dim) : rank_(rank), dim_(dim) {
  if (rank < 0 || dim < 0) throw InvalidArgument("negative tensor rank or dimension");
  data_.assign(ipow(static_cast<std::size_t>(dim), rank), 0.0);
}

SymTensor SymTensor::scalar(double value, int dim) {
  SymTensor t(0, dim);
  t.data_[0] = value;
  return t;
}

SymTensor SymTensor::identity(int dim) {
  SymTensor t(2, dim);
  for (int i = 0; i < dim; ++i) t.data_[static_cast<std::size_t>(i) * dim + i] = 1.0;
  return t;
}

SymTensor SymTensor::from_vector(const Eigen::VectorXd& v) {
  SymTensor t(1, static_cast<int>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data_[i] = v[i];
  return t;
}

SymTensor SymTensor::from_matrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("matrix must be square");
  const int n = static_cast<int>(m.rows());
  SymTensor t(2, n);
  Eigen::Map<RowMat>(t.data_.data(), n, n) = m;
  return t;
}

std::size_t SymTensor::flat_index(std::span<const int> idx) const {
  std::size_t f = 0;
  for (int v : idx) f = f * dim_ + v;
  return f;
}

Eigen::VectorXd SymTensor::to_vector() const {
  if (rank_ != 1) throw InvalidArgument("to_vector requires rank 1");
  return Eigen::Map<const Eigen::VectorXd>(data_.data(), dim_);
}

Eigen::MatrixXd SymTensor::to_matrix() const {
  if (rank_ != 2) throw InvalidArgument("to_matrix requires rank 2");
  return Eigen::Map<const RowMat>(data_.data(), dim_, dim_);
}

double SymTensor::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double SymTensor::max_asymmetry() const {
  if (rank_ < 2) return 0.0;
  double worst = 0.0;
  std::vector<int> idx(rank_, 0), sw(rank_);
  do {
    for (int p = 0; p + 1 < rank_; ++p) {
      sw = idx;
      std::swap(sw[p], sw[p + 1]);
      worst = std::max(worst, std::abs(at(idx) - at(sw)));
    }
  } while (detail::next_index(idx, dim_));
  return worst;
}

void SymTensor::symmetrize() {
  if (rank_ < 2) return;
  std::vector<double> out(data_.size(), 0.0);
  std::vector<int> idx(rank_, 0), perm(rank_), p(rank_);
  const double inv = 1.0 / detail::factorial(rank_);
  do {
    std::iota(perm.begin(), perm.end(), 0);
    double acc = 0.0;
    do {
      for (int a = 0; a < rank_; ++a) p[a] = idx[perm[a]];
      acc += at(p);
    } while (std::next_permutation(perm.begin(), perm.end()));
    out[flat_index(idx)] = acc * inv;
  } while (detail::next_index(idx, dim_));
  data_.swap(out);
}

SymTensor& SymTensor::operator+=(const SymTensor& o) {
  require_same_shape(*this, o);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

SymTensor& SymTensor::operator-=(const SymTensor& o) {
  require_same_shape(*this, o);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

SymTensor& SymTensor::operator*=(double c) {
  for (double& v : data_) v *= c;
  return *this;
}

SymTensor operator+(SymTensor a, const SymTensor& b) { return a += b; }
SymTensor operator-(SymTensor a, const SymTensor& b) { return a -= b; }
SymTensor operator*(double c, SymTensor a) { return a *= c; }

double inner(const SymTensor& a, const SymTensor& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

SymTensor symmetric_contract(const SymTensor& t, const Eigen::MatrixXd& w) {
  const int n = t.dim();
  const int r = t.rank();
  if (w.rows() != n || w.cols() != n) throw InvalidArgument("weight shape does not match tensor dimension");
  SymTensor cur = t;
  SymTensor next(r, n);
  for (int mode = 0; mode < r; ++mode) {
    const std::size_t outer = ipow(n, mode);
    const std::size_t inner_sz = ipow(n, r - mode - 1);
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t off = o * n * inner_sz;
      Eigen::Map<const RowMat> src(cur.data().data() + off, n, static_cast<Eigen::Index>(inner_sz));
      Eigen::Map<RowMat> dst(next.data().data() + off, n, static_cast<Eigen::Index>(inner_sz));
      dst.noalias() = w * src;
    }
    std::swap(cur, next);
  }
  return cur;
}

SymTensor trace(const SymTensor& t, int times) {
  if (times < 0) throw InvalidArgument("negative trace count");
  SymTensor cur = t;
  for (int k = 0; k < times; ++k) {
    const int r = cur.rank();
    const int n = cur.dim();
    if (r < 2) return SymTensor(std::max(r - 2 * (times - k), 0), n);
    SymTensor out(r - 2, n);
    const std::size_t rest = ipow(n, r - 2);
    for (int i = 0; i < n; ++i) {
      const std::size_t base = (static_cast<std::size_t>(i) * n + i) * rest;
      for (std::size_t q = 0; q < rest; ++q) out[q] += cur[base + q];
    }
    cur = std::move(out);
  }
  return cur;
}

SymTensor cup(const SymTensor& t, const Eigen::MatrixXd& m, int times) {
  if (times < 0) throw InvalidArgument("negative cup count");
  SymTensor cur = t;
  const int n = t.dim();
  if (m.rows() != n || m.cols() != n) throw InvalidArgument("cup matrix shape mismatch");
  for (int k = 0; k < times; ++k) {
    const int r = cur.rank();
    SymTensor out(r + 2, n);
    std::vector<int> idx(r + 2, 0), rest(r);
    do {
      double acc = 0.0;
      for (int u = 0; u < r + 2; ++u) {
        for (int v = u + 1; v < r + 2; ++v) {
          int q = 0;
          for (int a = 0; a < r + 2; ++a)
            if (a != u && a != v) rest[q++] = idx[a];
          acc += m(idx[u], idx[v]) * cur.at(rest);
        }
      }
      out.at(idx) = acc;
    } while (detail::next_index(idx, n));
    cur = std::move(out);
  }
  return cur;
}

SymTensor cup_identity(const SymTensor& t, int times) {
  if (times < 0) throw InvalidArgument("negative cup count");
  SymTensor cur = t;
  const int n = t.dim();
  for (int k = 0; k < times; ++k) {
    const int r = cur.rank();
    SymTensor out(r + 2, n);
    std::vector<int> idx(r + 2, 0), rest(r);
    do {
      double acc = 0.0;
      for (int u = 0; u < r + 2; ++u) {
        for (int v = u + 1; v < r + 2; ++v) {
          if (idx[u] != idx[v]) continue;
          int q = 0;
          for (int a = 0; a < r + 2; ++a)
            if (a != u && a != v) rest[q++] = idx[a];
          acc += cur.at(rest);
        }
      }
      out.at(idx) = acc;
    } while (detail::next_index(idx, n));
    cur = std::move(out);
  }
  return cur;
}

DiagSlice::DiagSlice(std::vector<int> p, int n) : pattern(std::move(p)), dim(n) {
  data.assign(ipow(static_cast<std::size_t>(n), static_cast<int>(pattern.size())), 0.0);
}

int DiagSlice::order() const { return std::accumulate(pattern.begin(), pattern.end(), 0); }

std::size_t DiagSlice::flat_index(std::span<const int> idx) const {
  std::size_t f = 0;
  for (int v : idx) f = f * dim + v;
  return f;
}

void DiagSlice::zero_repeated() {
  const int b = blocks();
  if (b < 2) return;
  std::vector<int> idx(b, 0);
  std::size_t f = 0;
  do {
    if (!detail::all_distinct(idx)) data[f] = 0.0;
    ++f;
  } while (detail::next_index(idx, dim));
}

double DiagSlice::frobenius_norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return std::sqrt(s);
}

namespace {

void expand_index(std::span<const int> u, std::span<const int> idx, std::vector<int>& full) {
  full.clear();
  for (std::size_t p = 0; p < u.size(); ++p)
    for (int c = 0; c < u[p]; ++c) full.push_back(idx[p]);
}

}  // namespace

DiagSlice diagonal_slice(const SymTensor& t, std::span<const int> u) {
  int total = 0;
  for (int v : u) {
    if (v < 0) throw InvalidArgument("negative slice pattern entry");
    total += v;
  }
  if (total != t.rank()) throw InvalidArgument("slice pattern does not sum to tensor rank");
  DiagSlice s(std::vector<int>(u.begin(), u.end()), t.dim());
  const int b = static_cast<int>(u.size());
  if (b == 0) {
    s.data[0] = t[0];
    return s;
  }
  std::vector<int> idx(b, 0), full;
  std::size_t f = 0;
  do {
    if (detail::all_distinct(idx)) {
      expand_index(u, idx, full);
      s.data[f] = t.at(full);
    }
    ++f;
  } while (detail::next_index(idx, t.dim()));
  return s;
}

SymTensor embed_slices(std::span<const DiagSlice> slices, int rank, int dim, bool assume_symmetric) {
  SymTensor out(rank, dim);
  if (slices.empty()) return out;
  std::vector<std::vector<int>> sorted_patterns;
  for (const auto& s : slices) {
    for (int v : s.pattern)
      if (v <= 0) throw InvalidArgument("embedding requires positive pattern entries");
    if (s.order() != rank || s.dim != dim) throw InvalidArgument("slice does not match embedding rank");
    sorted_patterns.push_back(detail::sorted_desc(s.pattern));
  }
  if (rank == 0) {
    for (const auto& s : slices) out[0] += s.data[0];
    return out;
  }
  std::vector<int> j(rank, 0), counts, idx;
  std::vector<char> used;
  std::size_t f = 0;
  do {
    const IndexType t = index_type(j);
    counts.assign(t.mult, t.mult + t.count);
    counts = detail::sorted_desc(std::move(counts));
    double acc = 0.0;
    for (std::size_t k = 0; k < slices.size(); ++k) {
      if (sorted_patterns[k] != counts) continue;
      const DiagSlice& s = slices[k];
      idx.assign(s.pattern.size(), 0);
      used.assign(t.count, 0);
      double sum = 0.0;
      int hits = 0;
      auto fn = [&](const std::vector<int>& a) {
        sum += s.at(a);
        ++hits;
      };
      if (assume_symmetric) {
        for (std::size_t p = 0; p < s.pattern.size(); ++p) {
          for (int q = 0; q < t.count; ++q) {
            if (!used[q] && t.mult[q] == s.pattern[p]) {
              used[q] = 1;
              idx[p] = t.values[q];
              break;
            }
          }
        }
        fn(idx);
      } else {
        for_each_assignment(s.pattern, t, 0, idx, used, fn);
      }
      acc += sum / hits;
    }
    out[f++] = acc;
  } while (detail::next_index(j, dim));
  return out;
}

SymTensor embed_slice(const DiagSlice& s, bool assume_symmetric) {
  return embed_slices(std::span<const DiagSlice>(&s, 1), s.order(), s.dim, assume_symmetric);
}

namespace {

std::vector<std::pair<int, int>> pair_types(int b) {
  std::vector<std::pair<int, int>> p;
  for (int a = 0; a < b; ++a)
    for (int c = a; c < b; ++c) p.emplace_back(a, c);
  return p;
}

void enumerate_graphs(const std::vector<std::pair<int, int>>& types, int start, int remaining, Multigraph& cur,
                      std::vector<Multigraph>& out) {
  if (remaining == 0) {
    out.push_back(cur);
    return;
  }
  for (int k = start; k < static_cast<int>(types.size()); ++k) {
    cur.push_back(types[k]);
    enumerate_graphs(types, k, remaining - 1, cur, out);
    cur.pop_back();
  }
}

// Product over distinct edge types of (multiplicity)!, self-loops included.
double edge_multiplicity_factorial(const Multigraph& g) {
  std::map<std::pair<int, int>, int> mult;
  for (const auto& e : g) ++mult[e];
  double r = 1.0;
  for (const auto& [e, m] : mult) r *= detail::factorial(m);
  return r;
}

int self_loops(const Multigraph& g) {
  int c = 0;
  for (const auto& e : g) c += e.first == e.second;
  return c;
}

}  // namespace

const std::vector<Multigraph>& multigraphs(int b, int s) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<Multigraph>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(b, s);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<Multigraph> out;
  Multigraph cur;
  if (b > 0 || s == 0) enumerate_graphs(pair_types(b), 0, s, cur, out);
  return cache.emplace(key, std::move(out)).first->second;
}

std::vector<int> multigraph_degrees(const Multigraph& g, int b) {
  std::vector<int> d(b, 0);
  for (const auto& [a, c] : g) {
    if (a == c) {
      d[a] += 2;
    } else {
      ++d[a];
      ++d[c];
    }
  }
  return d;
}

bool totally_disconnected(const Multigraph& g) {
  for (const auto& e : g)
    if (e.first != e.second) return false;
  return true;
}

double delta_cup_coefficient(std::span<const int> lambda, const Multigraph& g) {
  const int b = static_cast<int>(lambda.size());
  const auto d = multigraph_degrees(g, b);
  double num = detail::factorial(static_cast<int>(g.size()));
  for (int i = 0; i < b; ++i) {
    if (d[i] > lambda[i]) return 0.0;
    num *= detail::pochhammer(lambda[i] - d[i] + 1, d[i]);
  }
  const double den = std::ldexp(1.0, self_loops(g)) * edge_multiplicity_factorial(g);
  return num / den;
}

double trace_delta_coefficient(std::span<const int> lambda, const Multigraph& g) {
  if (!totally_disconnected(g)) return 0.0;
  const int b = static_cast<int>(lambda.size());
  const auto d = multigraph_degrees(g, b);
  // Ways to route the traced pairs into blocks, times the orderings of equal
  // kept blocks, over the symmetry of equal blocks of lambda.
  double c = detail::factorial(static_cast<int>(g.size()));
  std::map<int, int> sizes, kept_sizes;
  for (int i = 0; i < b; ++i) {
    if (d[i] > lambda[i]) return 0.0;
    c /= detail::factorial(d[i] / 2);
    ++sizes[lambda[i]];
    if (lambda[i] > d[i]) ++kept_sizes[lambda[i] - d[i]];
  }
  for (const auto& [size, count] : kept_sizes) c *= detail::factorial(count);
  for (const auto& [size, count] : sizes) c /= detail::factorial(count);
  return c;
}

SymTensor trace_of_diagonal(const DiagSlice& s, int t) {
  const int r = s.order();
  const int b = s.blocks();
  const int n = s.dim;
  if (t < 0 || 2 * t > r) throw InvalidArgument("trace count out of range");
  SymTensor out(r - 2 * t, n);
  if (t == 0) return embed_slice(s);
  for (const Multigraph& g : multigraphs(b, t)) {
    if (!totally_disconnected(g)) continue;
    const double c = trace_delta_coefficient(s.pattern, g);
    if (c == 0.0) continue;
    const auto d = multigraph_degrees(g, b);
    std::vector<int> kept, reduced_pattern;
    for (int j = 0; j < b; ++j) {
      if (s.pattern[j] > d[j]) {
        kept.push_back(j);
        reduced_pattern.push_back(s.pattern[j] - d[j]);
      }
    }
    DiagSlice reduced(reduced_pattern, n);
    std::vector<int> idx(b, 0), sub(kept.size());
    std::size_t f = 0;
    do {
      const double v = s.data[f++];
      if (v == 0.0) continue;
      for (std::size_t q = 0; q < kept.size(); ++q) sub[q] = idx[kept[q]];
      reduced.at(sub) += v;
    } while (detail::next_index(idx, n));
    if (kept.empty()) {
      out[0] += c * reduced.data[0];
    } else {
      SymTensor e = embed_slice(reduced, false);
      e *= c;
      out += e;
    }
  }
  return out;
}

DiagSlice slice_of_cup(const SymTensor& t, const Eigen::MatrixXd& m, std::span<const int> u, int s) {
  const int b = static_cast<int>(u.size());
  const int n = t.dim();
  const int total = std::accumulate(u.begin(), u.end(), 0);
  if (total != t.rank() + 2 * s) throw InvalidArgument("slice pattern does not match cup rank");
  if (s > 0 && (m.rows() != n || m.cols() != n)) throw InvalidArgument("cup matrix shape mismatch");
  DiagSlice out(std::vector<int>(u.begin(), u.end()), n);
  if (b == 0) {
    out.data[0] = t[0];
    return out;
  }
  std::vector<int> idx(b, 0), full, reduced(b);
  for (const Multigraph& g : multigraphs(b, s)) {
    const double c = delta_cup_coefficient(u, g);
    if (c == 0.0) continue;
    const auto d = multigraph_degrees(g, b);
    for (int j = 0; j < b; ++j) reduced[j] = u[j] - d[j];
    std::fill(idx.begin(), idx.end(), 0);
    std::size_t f = 0;
    do {
      if (detail::all_distinct(idx)) {
        expand_index(reduced, idx, full);
        double v = c * t.at(full);
        for (const auto& [a, e] : g) v *= m(idx[a], idx[e]);
        out.data[f] += v;
      }
      ++f;
    } while (detail::next_index(idx, n));
  }
  return out;
}

double harmonic_coefficient(int r, int n, int s, int t) {
  if (s < 0 || t < 0 || 2 * (s + t) > r) throw InvalidArgument("harmonic coefficient index out of range");
  const double a = r + 0.5 * n - 2.0 * s - 1.0;
  // (a - t)_{s+t+1} contains the factor a, which cancels the numerator.
  double prod = 1.0;
  for (int q = 0; q <= s + t; ++q) {
    if (q == t) continue;
    prod *= a - t + q;
  }
  if (std::abs(prod) < 1e-8)
    throw NumericalError("harmonic coefficient denominator vanishes for r=" + std::to_string(r) +
                         ", n=" + std::to_string(n));
  const double sign = (t % 2 == 0) ? 1.0 : -1.0;
  return sign / (std::ldexp(1.0, s + t) * detail::factorial(s) * detail::factorial(t) * prod);
}

std::vector<SymTensor> harmonic_decompose(const SymTensor& t) {
  const int r = t.rank();
  const int n = t.dim();
  std::vector<SymTensor> traces{t};
  for (int m = 1; m <= r / 2; ++m) traces.push_back(trace(traces.back()));
  std::vector<SymTensor> parts;
  for (int s = 0; s <= r / 2; ++s) {
    SymTensor h(r - 2 * s, n);
    for (int q = 0; q <= (r - 2 * s) / 2; ++q) {
      SymTensor term = cup_identity(traces[s + q], q);
      term *= harmonic_coefficient(r, n, s, q);
      h += term;
    }
    parts.push_back(std::move(h));
  }
  return parts;
}

SymTensor harmonic_reconstruct(const std::vector<SymTensor>& parts) {
  if (parts.empty()) throw InvalidArgument("no harmonic parts");
  SymTensor out = parts[0];
  for (std::size_t s = 1; s < parts.size(); ++s) out += cup_identity(parts[s], static_cast<int>(s));
  return out;
}

SymTensor harmonic_projection(int r, int n, int s, const std::function<SymTensor(int)>& traces) {
  if (2 * s > r) throw InvalidArgument("projection order out of range");
  SymTensor out(r - 2 * s, n);
  std::map<int, SymTensor> cache;
  auto tr = [&](int m) -> const SymTensor& {
    auto it = cache.find(m);
    if (it == cache.end()) it = cache.emplace(m, traces(m)).first;
    return it->second;
  };
  for (int sp = s; sp <= r / 2; ++sp) {
    SymTensor h(r - 2 * sp, n);
    for (int q = 0; q <= (r - 2 * sp) / 2; ++q) {
      SymTensor term = cup_identity(tr(sp + q), q);
      term *= harmonic_coefficient(r, n, sp, q);
      h += term;
    }
    out += cup_identity(h, sp - s);
  }
  return out;
}

}  // namespace kprop
