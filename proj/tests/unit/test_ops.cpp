#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "../support/fixtures.hpp"
#include "../support/reference.hpp"
#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"

using namespace mtpv;
using nn::Matrix;

TEST(Matmul, MatchesNaiveTripleLoopBitForBit) {
  nn::RngStream rng(3);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {5, 7, 3}, {9, 16, 33}, {4, 64, 66}, {13, 3, 8}}) {
    const Matrix a = testkit::random_matrix(m, k, rng);
    const Matrix b = testkit::random_matrix(k, n, rng);
    const Matrix c = nn::matmul(a, b);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += a(i, p) * b(p, j);
        ASSERT_EQ(c(i, j), s) << m << "x" << k << "x" << n;
      }
  }
}

TEST(Matmul, RowResultIndependentOfBatchSize) {
  nn::RngStream rng(4);
  const Matrix a = testkit::random_matrix(11, 24, rng);
  const Matrix b = testkit::random_matrix(24, 40, rng);
  const Matrix full = nn::matmul(a, b);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Matrix one = nn::matmul(nn::slice_rows(a, i, 1), b);
    for (std::size_t j = 0; j < b.cols(); ++j) ASSERT_EQ(one(0, j), full(i, j));
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(nn::matmul(Matrix(2, 3), Matrix(4, 2)), ShapeError);
}

TEST(Matmul, TransposedAccumulateMatchesExplicitTranspose) {
  nn::RngStream rng(5);
  const Matrix a = testkit::random_matrix(7, 5, rng);
  const Matrix b = testkit::random_matrix(7, 6, rng);
  Matrix out(5, 6, 1.0);
  nn::matmul_tn_accumulate(a, b, out);
  const Matrix ref = nn::matmul(nn::transpose(a), b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out(i, j), ref(i, j) + 1.0, 1e-12);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  const std::vector<double> x{0.5, -1.0, 3.0, 2.0};
  const auto p = nn::softmax(x, 1.0);
  double s = 0.0;
  for (double v : p) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 1000.0;
  const auto q = nn::softmax(shifted, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(Softmax, TemperatureMatchesClosedForm) {
  const std::vector<double> x{0.0, 1.0, 2.0};
  const auto p = nn::softmax(x, 2.0);
  const double z = 1.0 + std::exp(0.5) + std::exp(1.0);
  EXPECT_NEAR(p[0], 1.0 / z, 1e-15);
  EXPECT_NEAR(p[2], std::exp(1.0) / z, 1e-15);
  EXPECT_THROW(nn::softmax(x, 0.0), ParameterError);
}

TEST(RmsNorm, UnitGainGivesUnitRms) {
  const std::vector<double> x{3.0, -4.0, 12.0, 0.5};
  const std::vector<double> g(4, 1.0);
  const auto y = nn::rms_norm(x, g, 0.0);
  double ms = 0.0;
  for (double v : y) ms += v * v;
  EXPECT_NEAR(ms / 4.0, 1.0, 1e-14);
}

TEST(RmsNorm, ZeroInputMapsToZero) {
  const std::vector<double> x(8, 0.0), g(8, 2.0);
  for (double v : nn::rms_norm(x, g, 0.0)) EXPECT_EQ(v, 0.0);
}

TEST(Rope, PositionZeroIsIdentity) {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto orig = v;
  nn::rotate_pairs(v, 0, 10000.0);
  EXPECT_EQ(v, orig);
}

TEST(Rope, PreservesNormAndInverts) {
  nn::RngStream rng(6);
  std::vector<double> v(16);
  for (double& x : v) x = rng.normal();
  const auto orig = v;
  nn::rotate_pairs(v, 37, 10000.0);
  double n0 = 0.0, n1 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    n0 += orig[i] * orig[i];
    n1 += v[i] * v[i];
  }
  EXPECT_NEAR(n0, n1, 1e-12);
  nn::rotate_pairs(v, 37, 10000.0, true);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], orig[i], 1e-13);
}

TEST(Rope, MatchesComplexRotationOracle) {
  nn::RngStream rng(7);
  std::vector<double> v(8);
  for (double& x : v) x = rng.normal();
  std::vector<double> ref = v;
  nn::rotate_pairs(v, 5, 10000.0);
  testkit::ref_rope(ref, 0, 8, 5, 10000.0);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], ref[i], 1e-14);
}

TEST(Rope, RelativePositionInvariance) {
  // <R(p)q, R(p+d)k> depends only on d.
  nn::RngStream rng(8);
  std::vector<double> q(8), k(8);
  for (double& x : q) x = rng.normal();
  for (double& x : k) x = rng.normal();
  auto dot_at = [&](std::size_t p, std::size_t d) {
    auto [qr, kr] = std::pair{q, k};
    nn::rotate_pairs(qr, p, 10000.0);
    nn::rotate_pairs(kr, p + d, 10000.0);
    double s = 0.0;
    for (std::size_t i = 0; i < 8; ++i) s += qr[i] * kr[i];
    return s;
  };
  EXPECT_NEAR(dot_at(0, 3), dot_at(20, 3), 1e-12);
}

TEST(Rope, OddLengthThrows) {
  std::vector<double> v(5, 1.0);
  EXPECT_THROW(nn::rotate_pairs(v, 1, 10000.0), ShapeError);
}

TEST(Silu, GradientMatchesFiniteDifference) {
  for (double x : {-4.0, -0.3, 0.0, 0.7, 5.0}) {
    const double h = 1e-6;
    const double fd = (nn::silu(x + h) - nn::silu(x - h)) / (2 * h);
    EXPECT_NEAR(nn::silu_grad(x), fd, 1e-8);
  }
}

TEST(Matrix, RoundToStorageIsIdempotentFloatRounding) {
  Matrix m(1, 3, std::vector<double>{0.1, 1.0 / 3.0, -2.5});
  nn::round_to_storage(m);
  EXPECT_EQ(m(0, 0), static_cast<double>(0.1f));
  EXPECT_EQ(m(0, 1), static_cast<double>(1.0f / 3.0f));
  const Matrix copy = m;
  nn::round_to_storage(m);
  EXPECT_EQ(m, copy);
}
