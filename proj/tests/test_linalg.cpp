#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tfem/linalg.hpp"

using namespace tfem;

namespace {

Mat random_symmetric(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Mat a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) a(i, j) = a(j, i) = g(rng);
  return a;
}

}  // namespace

TEST(Softmax, SymmetricColumnIsUniform) {
  Mat s = softmax_cols(Mat::from_rows({{0.0}, {0.0}}));
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(1, 0), 0.5);
}

TEST(Softmax, ClosedFormLog3) {
  Mat s = softmax_cols(Mat::from_rows({{std::log(3.0)}, {0.0}}));
  EXPECT_NEAR(s(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(s(1, 0), 0.25, 1e-15);
}

TEST(Softmax, LargeEntriesDoNotOverflow) {
  Mat s = softmax_cols(Mat::from_rows({{1e4, 0.0}, {0.0, 1e4}}));
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(s(1, 1), 1.0, 1e-12);
}

TEST(Softmax, EmptyInputIsShapeError) {
  try {
    softmax_cols(Mat());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape);
  }
}

TEST(Softmax, ColumnsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    Mat m(1 + trial % 7, 1 + trial % 5);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    Mat s = softmax_cols(m);
    Mat shifted = m;
    for (std::size_t i = 0; i < m.rows(); ++i) shifted(i, 0) += 17.25;
    Mat s2 = softmax_cols(shifted);
    for (std::size_t j = 0; j < m.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) {
        EXPECT_GE(s(i, j), 0.0);
        sum += s(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    for (std::size_t i = 0; i < m.rows(); ++i) EXPECT_NEAR(s(i, 0), s2(i, 0), 1e-12);
  }
}

TEST(Relu, Examples) {
  EXPECT_EQ(relu(Mat::from_rows({{-1.0, 2.0}})), Mat::from_rows({{0.0, 2.0}}));
  EXPECT_EQ(relu(Mat(3, 2)), Mat(3, 2));
  EXPECT_EQ(relu(Mat::from_rows({{3.5}})), Mat::from_rows({{3.5}}));
}

TEST(Jacobi, DiagonalAndIdentity) {
  Eigh e = jacobi_eigh(Mat::from_rows({{1.0, 0.0}, {0.0, 3.0}}));
  EXPECT_DOUBLE_EQ(e.values[0], 3.0);
  EXPECT_DOUBLE_EQ(e.values[1], 1.0);
  EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-15);
  Eigh id = jacobi_eigh(Mat::identity(4));
  for (double v : id.values) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Jacobi, RejectsNonSymmetric) {
  try {
    jacobi_eigh(Mat::from_rows({{1.0, 2.0}, {0.0, 1.0}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::precondition);
  }
}

TEST(Jacobi, ReconstructsRandomSpd) {
  std::mt19937_64 rng(5);
  Mat b = random_symmetric(6, rng);
  Mat a = matmul(b, b);
  Eigh e = jacobi_eigh(a);
  Mat lam(6, 6);
  for (int i = 0; i < 6; ++i) lam(i, i) = e.values[i];
  Mat rec = matmul(matmul(e.vectors, lam), transpose(e.vectors));
  EXPECT_LT(max_abs_diff(rec, a), 1e-8);
}

TEST(Jacobi, ResidualsOnRandomSymmetric) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + trial % 16;
    Mat a = random_symmetric(d, rng);
    Eigh e = jacobi_eigh(a);
    const double scale = fro(a);
    for (std::size_t i = 0; i + 1 < d; ++i) ASSERT_GE(e.values[i], e.values[i + 1]);
    for (std::size_t i = 0; i < d; ++i) {
      Vec v = e.vectors.col(i);
      Vec av = matvec(a, v);
      for (std::size_t r = 0; r < d; ++r) ASSERT_NEAR(av[r], e.values[i] * v[r], 1e-8 * scale);
      for (std::size_t j = 0; j < d; ++j)
        ASSERT_NEAR(dot(v, e.vectors.col(j)), i == j ? 1.0 : 0.0, 1e-10);
    }
  }
}

TEST(PowerMethod, ConvergesOnDiag31) {
  Vec v = power_method_ref(Mat::from_rows({{3.0, 0.0}, {0.0, 1.0}}), {1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}, 50);
  EXPECT_GE(std::abs(v[0]), 1.0 - 1e-12);
  EXPECT_NEAR(l2(v), 1.0, 1e-15);
}

TEST(PowerMethod, EigenvectorIsFixedPoint) {
  Vec v = power_method_ref(Mat::from_rows({{3.0, 0.0}, {0.0, 1.0}}), {1.0, 0.0}, 1);
  EXPECT_EQ(v, (Vec{1.0, 0.0}));
}

TEST(PowerMethod, IdentityOnlyNormalises) {
  Vec v = power_method_ref(Mat::identity(3), {3.0, 0.0, 4.0}, 7);
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[2], 0.8, 1e-15);
}

TEST(PowerMethod, ZeroProductIsDegenerate) {
  try {
    power_method_ref(Mat::from_rows({{1.0, 0.0}, {0.0, 0.0}}), {0.0, 1.0}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate);
  }
}

TEST(Norms, Examples) {
  EXPECT_NEAR(op_norm(Mat::from_rows({{2.0, 0.0}, {0.0, -5.0}})), 5.0, 1e-10);
  EXPECT_DOUBLE_EQ(l2({3.0, 4.0}), 5.0);
  EXPECT_DOUBLE_EQ(fro(Mat(2, 2, 1.0)), 2.0);
  EXPECT_EQ(op_norm(Mat(3, 3)), 0.0);
}

TEST(Norms, OpNormMatchesJacobiSingularValue) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Mat m(2 + trial % 5, 1 + trial % 7);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    const double ref = std::sqrt(jacobi_eigh(matmul_tn(m, m)).values[0]);
    EXPECT_NEAR(op_norm(m), ref, 1e-8 * std::max(1.0, ref));
  }
}

TEST(MatOps, ProductsAgree) {
  Mat a = Mat::from_rows({{1, 2, 3}, {4, 5, 6}});
  Mat b = Mat::from_rows({{1, 0}, {0, 1}, {1, 1}});
  EXPECT_EQ(matmul(a, b), Mat::from_rows({{4, 5}, {10, 11}}));
  EXPECT_EQ(matmul_tn(a, a), matmul(transpose(a), a));
  EXPECT_EQ(matvec(a, {1, 1, 1}), (Vec{6, 15}));
  EXPECT_EQ(outer({1, 2}, {3, 4}), Mat::from_rows({{3, 4}, {6, 8}}));
}
