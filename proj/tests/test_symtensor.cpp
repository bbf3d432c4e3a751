#include "kprop/combinat.hpp"
#include "kprop/errors.hpp"
#include "kprop/symtensor.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace kprop {
namespace {

using testing::compositions;
using testing::max_abs_diff;
using testing::random_matrix;
using testing::random_symmetric;

constexpr double kTol = 1e-10;

SymTensor naive_contract(const SymTensor& t, const Eigen::MatrixXd& w) {
  const int r = t.rank(), n = t.dim();
  SymTensor out(r, n);
  std::vector<int> i(r, 0);
  do {
    double acc = 0.0;
    std::vector<int> j(r, 0);
    do {
      double p = t.at(j);
      for (int a = 0; a < r; ++a) p *= w(i[a], j[a]);
      acc += p;
    } while ([&] {
      for (int p = r - 1; p >= 0; --p) {
        if (++j[p] < n) return true;
        j[p] = 0;
      }
      return false;
    }());
    out.at(i) = acc;
  } while ([&] {
    for (int p = r - 1; p >= 0; --p) {
      if (++i[p] < n) return true;
      i[p] = 0;
    }
    return false;
  }());
  return out;
}

TEST(SymTensor, ContractMatchesDefinition) {
  std::mt19937_64 gen(1);
  for (int r = 0; r <= 3; ++r) {
    auto t = random_symmetric(r, 3, gen);
    auto w = random_matrix(3, 3, gen);
    EXPECT_LT(max_abs_diff(symmetric_contract(t, w).data(), naive_contract(t, w).data()), kTol) << "rank " << r;
  }
}

TEST(SymTensor, IdentityContractionGivesGram) {
  std::mt19937_64 gen(2);
  auto w = random_matrix(5, 5, gen);
  Eigen::MatrixXd gram = w * w.transpose();
  auto c = symmetric_contract(SymTensor::identity(5), w).to_matrix();
  EXPECT_LT((c - gram).cwiseAbs().maxCoeff(), kTol);
}

TEST(SymTensor, ContractionIsFunctorial) {
  std::mt19937_64 gen(3);
  for (int r = 1; r <= 4; ++r) {
    auto t = random_symmetric(r, 4, gen);
    auto w1 = random_matrix(4, 4, gen);
    auto w2 = random_matrix(4, 4, gen);
    auto lhs = symmetric_contract(symmetric_contract(t, w1), w2);
    auto rhs = symmetric_contract(t, w2 * w1);
    EXPECT_LT(max_abs_diff(lhs.data(), rhs.data()), 1e-9) << "rank " << r;
    EXPECT_LT(lhs.max_asymmetry(), 1e-10);
  }
}

TEST(SymTensor, ScalarAndVectorEdgeCases) {
  auto s = SymTensor::scalar(2.5, 4);
  std::mt19937_64 gen(4);
  auto w = random_matrix(4, 4, gen);
  EXPECT_DOUBLE_EQ(symmetric_contract(s, w)[0], 2.5);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
  auto c = symmetric_contract(SymTensor::from_vector(v), w).to_vector();
  EXPECT_LT((c - w * v).cwiseAbs().maxCoeff(), kTol);
}

TEST(SymTensor, ShapeMismatchThrows) {
  SymTensor a(2, 3), b(2, 4);
  EXPECT_THROW(a += b, InvalidArgument);
  EXPECT_THROW(symmetric_contract(a, Eigen::MatrixXd::Zero(4, 4)), InvalidArgument);
}

TEST(SymTensor, CupIdentityMatchesCupWithIdentityMatrix) {
  std::mt19937_64 gen(5);
  auto t = random_symmetric(2, 3, gen);
  auto a = cup(t, Eigen::MatrixXd::Identity(3, 3), 2);
  auto b = cup_identity(t, 2);
  EXPECT_LT(max_abs_diff(a.data(), b.data()), kTol);
  EXPECT_LT(a.max_asymmetry(), kTol);
}

// tr(g^k T) - g^k(tr T) = (2kr + kn + 2k(k-1)) g^{k-1}(T).
TEST(SymTensor, TraceCupCommutator) {
  std::mt19937_64 gen(6);
  for (int n : {3, 5}) {
    for (int r = 0; r <= 2; ++r) {
      auto t = random_symmetric(r, n, gen);
      for (int k = 1; k <= 2; ++k) {
        auto lhs = trace(cup_identity(t, k));
        if (r >= 2) lhs -= cup_identity(trace(t), k);
        auto rhs = cup_identity(t, k - 1);
        rhs *= 2.0 * k * r + k * n + 2.0 * k * (k - 1);
        EXPECT_LT(max_abs_diff(lhs.data(), rhs.data()), 1e-9) << "n=" << n << " r=" << r << " k=" << k;
      }
    }
  }
}

TEST(DiagSlice, EmbedRoundTrip) {
  std::mt19937_64 gen(7);
  for (int r = 1; r <= 4; ++r) {
    auto t = random_symmetric(r, 4, gen);
    SymTensor sum(r, 4);
    for (const auto& lambda : integer_partitions(r)) {
      auto s = diagonal_slice(t, lambda);
      auto e = embed_slice(s);
      auto back = diagonal_slice(e, lambda);
      EXPECT_LT(max_abs_diff(back.data, s.data), kTol);
      EXPECT_LT(max_abs_diff(embed_slice(s, true).data(), e.data()), kTol);
      sum += e;
    }
    // The slices over all integer partitions tile the tensor.
    EXPECT_LT(max_abs_diff(sum.data(), t.data()), kTol) << "rank " << r;
  }
}

TEST(DiagSlice, ZeroPatternEntriesAreConstant) {
  std::mt19937_64 gen(8);
  auto t = random_symmetric(2, 4, gen);
  std::vector<int> u{2, 0};
  auto s = diagonal_slice(t, u);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      std::vector<int> idx{i, j};
      std::vector<int> full{i, i};
      EXPECT_DOUBLE_EQ(s.at(idx), i == j ? 0.0 : t.at(full));
    }
  }
}

TEST(Multigraphs, CountsAreMultisetCoefficients) {
  auto binom = [](int a, int b) {
    double r = 1;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  for (int b = 1; b <= 4; ++b)
    for (int s = 0; s <= 3; ++s) {
      const int types = b * (b + 1) / 2;
      EXPECT_EQ(static_cast<double>(multigraphs(b, s).size()), binom(types + s - 1, s));
    }
}

TEST(DiagSlice, SliceOfCupMatchesNaiveComposition) {
  std::mt19937_64 gen(9);
  const int n = 4;
  auto m = testing::random_spd(n, gen);
  for (int total = 2; total <= 6; ++total) {
    for (int s = 1; 2 * s <= total && s <= 2; ++s) {
      const int r = total - 2 * s;
      if (r + 2 * s > 6) continue;
      auto t = random_symmetric(r, n, gen);
      auto full = cup(t, m, s);
      for (int b = 1; b <= 3; ++b) {
        for (const auto& u : compositions(total, b)) {
          if (total > 5 && b > 2) continue;
          auto fast = slice_of_cup(t, m, u, s);
          auto slow = diagonal_slice(full, u);
          EXPECT_LT(max_abs_diff(fast.data, slow.data), kTol)
              << "total=" << total << " s=" << s << " b=" << b << " u0=" << u[0];
        }
      }
    }
  }
}

TEST(DiagSlice, SliceOfCupWithoutCupIsSlice) {
  std::mt19937_64 gen(10);
  auto t = random_symmetric(3, 5, gen);
  std::vector<int> u{2, 1};
  auto a = slice_of_cup(t, Eigen::MatrixXd::Identity(5, 5), u, 0);
  auto b = diagonal_slice(t, u);
  EXPECT_LT(max_abs_diff(a.data, b.data), kTol);
}

TEST(DiagSlice, TraceOfDiagonalMatchesNaiveComposition) {
  std::mt19937_64 gen(11);
  for (int n : {3, 5, 6}) {
    for (int r = 2; r <= 4; ++r) {
      auto t = random_symmetric(r, n, gen);
      for (const auto& lambda : integer_partitions(r)) {
        auto s = diagonal_slice(t, lambda);
        auto embedded = embed_slice(s);
        for (int q = 1; 2 * q <= r; ++q) {
          auto fast = trace_of_diagonal(s, q);
          auto slow = trace(embedded, q);
          EXPECT_LT(max_abs_diff(fast.data(), slow.data()), kTol)
              << "n=" << n << " r=" << r << " lambda0=" << lambda[0] << " blocks=" << lambda.size() << " q=" << q;
        }
      }
    }
  }
}

TEST(DiagSlice, TraceOfDiagonalHigherRanks) {
  std::mt19937_64 gen(12);
  for (int r : {5, 6}) {
    auto t = random_symmetric(r, 4, gen);
    for (const auto& lambda : integer_partitions(r)) {
      auto s = diagonal_slice(t, lambda);
      auto embedded = embed_slice(s);
      for (int q = 1; 2 * q <= r; ++q)
        EXPECT_LT(max_abs_diff(trace_of_diagonal(s, q).data(), trace(embedded, q).data()), 1e-9)
            << "lambda " << ::testing::PrintToString(lambda) << " q=" << q;
    }
  }
}

TEST(Harmonic, ReconstructionAndTracelessness) {
  std::mt19937_64 gen(13);
  for (int n = 3; n <= 10; ++n) {
    for (int r = 0; r <= 4; ++r) {
      if (r == 4 && n > 7) continue;
      auto t = random_symmetric(r, n, gen);
      auto parts = harmonic_decompose(t);
      ASSERT_EQ(parts.size(), static_cast<std::size_t>(r / 2 + 1));
      auto back = harmonic_reconstruct(parts);
      EXPECT_LT(max_abs_diff(back.data(), t.data()), kTol) << "n=" << n << " r=" << r;
      for (const auto& h : parts) {
        if (h.rank() >= 2) EXPECT_LT(trace(h).frobenius_norm(), kTol) << "n=" << n << " r=" << r;
      }
    }
  }
}

TEST(Harmonic, RankFourAtLargerWidths) {
  std::mt19937_64 gen(14);
  for (int n : {8, 10}) {
    auto t = random_symmetric(4, n, gen);
    auto parts = harmonic_decompose(t);
    EXPECT_LT(max_abs_diff(harmonic_reconstruct(parts).data(), t.data()), kTol);
    EXPECT_LT(trace(parts[0]).frobenius_norm(), kTol);
    EXPECT_LT(trace(parts[1]).frobenius_norm(), kTol);
  }
}

TEST(Harmonic, IdentityIsPureTrace) {
  auto parts = harmonic_decompose(SymTensor::identity(6));
  EXPECT_LT(parts[0].frobenius_norm(), kTol);
  EXPECT_NEAR(parts[1][0], 1.0, kTol);
}

TEST(Harmonic, CoefficientAtSmallWidth) {
  // The vanishing factor cancels against the numerator: h_0 of a matrix is tr/n.
  EXPECT_NEAR(harmonic_coefficient(2, 2, 1, 0), 0.5, 1e-15);
  EXPECT_NEAR(harmonic_coefficient(2, 7, 1, 0), 1.0 / 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(harmonic_coefficient(3, 4, 0, 0), 1.0);
}

TEST(Harmonic, ProjectionMatchesDecomposition) {
  std::mt19937_64 gen(15);
  const int n = 4;
  for (int r = 2; r <= 4; ++r) {
    auto t = random_symmetric(r, n, gen);
    auto parts = harmonic_decompose(t);
    for (int s = 0; 2 * s <= r; ++s) {
      SymTensor expect(r - 2 * s, n);
      for (int sp = s; 2 * sp <= r; ++sp) expect += cup_identity(parts[sp], sp - s);
      auto got = harmonic_projection(r, n, s, [&](int m) { return trace(t, m); });
      EXPECT_LT(max_abs_diff(got.data(), expect.data()), kTol) << "r=" << r << " s=" << s;
    }
  }
}

}  // namespace
}  // namespace kprop
