#include "kprop/factorized.hpp"

#include "engine.hpp"
#include "kprop/errors.hpp"

#include <array>
#include <numeric>

namespace kprop {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Vec as_vector(const DiagSlice& s) { return Eigen::Map<const Vec>(s.data.data(), static_cast<Eigen::Index>(s.data.size())); }

// Row-major n x n view of a two-block slice: entry (i, j) = slice[i, j].
Mat as_matrix(const DiagSlice& s) {
  const int n = s.dim;
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = s.data[static_cast<std::size_t>(i) * n + j];
  return m;
}

DiagSlice from_matrix(const IntVec& pattern, const Mat& m) {
  const int n = static_cast<int>(m.rows());
  DiagSlice s(pattern, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s.data[static_cast<std::size_t>(i) * n + j] = i == j ? 0.0 : m(i, j);
  return s;
}

}  // namespace

Factored3::Factored3(Eigen::MatrixXd a_, Eigen::MatrixXd b_, Eigen::MatrixXd c_)
    : a(std::move(a_)), b(std::move(b_)), c(std::move(c_)) {
  if (a.rows() != b.rows() || a.rows() != c.rows() || a.cols() != b.cols() || a.cols() != c.cols())
    throw InvalidArgument("factor matrices must share their shape");
}

Factored3& Factored3::append(const Factored3& o) {
  if (o.dim() != dim()) throw InvalidArgument("factor dimension mismatch");
  const Eigen::Index j0 = a.cols(), j1 = o.a.cols();
  for (Mat* pair : {&a, &b, &c}) pair->conservativeResize(Eigen::NoChange, j0 + j1);
  a.rightCols(j1) = o.a;
  b.rightCols(j1) = o.b;
  c.rightCols(j1) = o.c;
  return *this;
}

double Factored3::entry(int i, int j, int k) const {
  const std::array<std::array<int, 3>, 6> perms{{{i, j, k}, {i, k, j}, {j, i, k}, {j, k, i}, {k, i, j}, {k, j, i}}};
  double acc = 0.0;
  for (const auto& p : perms) acc += (a.row(p[0]).array() * b.row(p[1]).array() * c.row(p[2]).array()).sum();
  return acc / 6.0;
}

Factored3 f3_contract(const Factored3& f, const Eigen::MatrixXd& w) {
  if (w.cols() != f.dim() || w.rows() != f.dim()) throw InvalidArgument("f3_contract: dimension mismatch");
  return Factored3(w * f.a, w * f.b, w * f.c);
}

DiagSlice f3_diagonal(const Factored3& f, const IntVec& lambda) {
  const int n = f.dim();
  if (lambda == IntVec{3}) {
    DiagSlice s(lambda, n);
    Vec d = (f.a.array() * f.b.array() * f.c.array()).rowwise().sum();
    std::copy(d.data(), d.data() + n, s.data.begin());
    return s;
  }
  if (lambda == IntVec{2, 1}) {
    const Mat m = ((f.b.array() * f.c.array()).matrix() * f.a.transpose() +
                   (f.a.array() * f.c.array()).matrix() * f.b.transpose() +
                   (f.a.array() * f.b.array()).matrix() * f.c.transpose()) /
                  3.0;
    return from_matrix(lambda, m);
  }
  throw InvalidArgument("f3_diagonal supports the patterns (3) and (2,1)");
}

Factored3 f3_embed_diagonal(const DiagSlice& slice) {
  const int n = slice.dim;
  const Mat id = Mat::Identity(n, n);
  if (slice.pattern == IntVec{3}) return Factored3(as_vector(slice).asDiagonal(), id, id);
  if (slice.pattern == IntVec{2, 1}) {
    Mat d = as_matrix(slice);
    d.diagonal().setZero();
    return Factored3(3.0 * d.transpose(), id, id);
  }
  throw InvalidArgument("f3_embed_diagonal supports the patterns (3) and (2,1)");
}

PropagationResult propagate_factorized_k3(const NetworkSpec& spec, const Weights& weights,
                                          const EstimatorConfig& config, std::vector<int>* factor_counts) {
  spec.validate();
  weights.check(spec);
  constexpr int K = 3;
  const int n = spec.width;
  const int L = spec.hidden_layers;
  const TrackingSchedule sched = TrackingSchedule::make(K, Variant::factorized);
  const int kmax = sched.hermite_order_cap();

  PropagationResult res;
  CumulantState& st = res.state;
  st.schedule = sched;
  if (factor_counts) factor_counts->clear();

  Vec mu = Vec::Zero(n);
  SymTensor eta2 = SymTensor::identity(n);
  SymTensor eta4 = SymTensor::scalar(0.0, n);
  Factored3 eta3(n);

  for (int l = 0; l <= L; ++l) {
    const Mat& w = weights.w[l];
    const bool last = l == L;
    if (last) {
      st.layer = L;
      st.mean = mu;
      st.variance = eta2.to_matrix().diagonal();
      st.eta = {{2, eta2}, {4, eta4}};
    }
    mu = w * mu;
    if (weights.has_bias()) mu += weights.b[l];
    if (last && !spec.final_activation) {
      res.estimate = mu;
      return res;
    }
    const SymTensor t2 = symmetric_contract(eta2, w);
    const Factored3 t3 = f3_contract(eta3, w);
    const Mat m = w * w.transpose();

    std::optional<Mat> d21;
    auto slice21 = [&]() -> const Mat& {
      if (!d21) d21 = as_matrix(f3_diagonal(t3, IntVec{2, 1}));
      return *d21;
    };
    detail::PreActivationSlices pre([&](const IntVec& pattern) -> std::optional<DiagSlice> {
      const int r = std::accumulate(pattern.begin(), pattern.end(), 0);
      if (r == 2) return slice_of_cup(t2, m, pattern, 0);
      if (r == 4) return slice_of_cup(eta4, m, pattern, 2);
      if (r != 3) return std::nullopt;
      if (pattern == IntVec{3}) return f3_diagonal(t3, pattern);
      if (pattern == IntVec{2, 1}) return from_matrix(pattern, slice21());
      if (pattern == IntVec{1, 2}) return from_matrix(pattern, slice21().transpose());
      throw std::logic_error("factored pipeline requested an unsupported rank-3 slice");
    });
    const Vec var = detail::floored_variance(pre.get(IntVec{2}), n, config.variance_floor, st);

    if (last) {
      const detail::HermiteTable h(*spec.final_activation, 1, kmax, mu, var, config.quadrature_nodes);
      res.estimate = as_vector(detail::power_cumulant(IntVec{1}, h, pre, K, n));
      return res;
    }

    const detail::HermiteTable h(spec.activations[l], sched.max_rank(), kmax, mu, var, config.quadrature_nodes);
    std::map<IntVec, DiagSlice> power;
    auto power_slice = [&](const IntVec& alpha) -> const DiagSlice& {
      auto it = power.find(alpha);
      if (it == power.end()) it = power.emplace(alpha, detail::power_cumulant(alpha, h, pre, K, n)).first;
      return it->second;
    };
    auto cumulant = [&](const IntVec& lam) { return power_to_cumulant_slice(lam, power_slice); };

    const Vec next_mu = as_vector(power_slice(IntVec{1}));
    const std::vector<DiagSlice> s2{cumulant({2}), cumulant({1, 1})};
    const std::vector<DiagSlice> s4{cumulant({4}), cumulant({2, 2})};

    // Off-diagonal part: the pass-through term and one two-legged term per center.
    const Vec& f1 = h(1, 1);
    const Vec& f2 = h(1, 2);
    Factored3 next(f1.asDiagonal() * t3.a, f1.asDiagonal() * t3.b, f1.asDiagonal() * t3.c);
    const Mat legs = f1.asDiagonal() * t2.to_matrix();
    next.append(Factored3(Mat(3.0 * f2.asDiagonal().toDenseMatrix()), legs, legs));

    // Replace the diagonal patterns with the exact cumulant slices.
    for (const IntVec& lam : {IntVec{3}, IntVec{2, 1}}) {
      DiagSlice d = cumulant(lam);
      const DiagSlice have = f3_diagonal(next, lam);
      for (std::size_t q = 0; q < d.data.size(); ++q) d.data[q] -= have.data[q];
      d.zero_repeated();
      next.append(f3_embed_diagonal(d));
    }

    mu = next_mu;
    eta2 = detail::project_slices(2, n, 0, s2);
    eta4 = detail::project_slices(4, n, 2, s4);
    eta3 = std::move(next);
    if (factor_counts) factor_counts->push_back(eta3.factors());
  }
  return res;
}

PropagationResult propagate_factorized(const NetworkSpec& spec, const Weights& weights, const EstimatorConfig& config) {
  EstimatorConfig cfg = config;
  if (cfg.K <= 2) {
    cfg.variant = Variant::basic;
    PropagationResult r = propagate(spec, weights, cfg);
    r.state.schedule.variant = Variant::factorized;
    return r;
  }
  if (cfg.K == 3) return propagate_factorized_k3(spec, weights, cfg);
  throw Unimplemented("factorized propagation is implemented for K <= 3");
}

}  // namespace kprop
