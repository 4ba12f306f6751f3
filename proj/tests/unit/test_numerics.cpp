#include <gtest/gtest.h>

#include <algorithm>
#include <complex>
#include <random>

#include "koopkit/numerics.hpp"

using namespace koopkit;
using numerics::pseudo_inverse;

namespace {

RealMatrix random_matrix(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RealMatrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

void expect_penrose(const RealMatrix& m, const RealMatrix& p, double tol) {
  const double scale = std::max(1.0, m.norm() * p.norm());
  EXPECT_LE((m * p * m - m).norm(), tol * scale * m.norm());
  EXPECT_LE((p * m * p - p).norm(), tol * scale * p.norm());
  EXPECT_LE(((m * p).transpose() - m * p).norm(), tol * scale);
  EXPECT_LE(((p * m).transpose() - p * m).norm(), tol * scale);
}

}  // namespace

TEST(PseudoInverse, IdentityIsItsOwnInverse) {
  const RealMatrix id = RealMatrix::Identity(3, 3);
  EXPECT_TRUE(pseudo_inverse(id).isApprox(id, 1e-15));
}

TEST(PseudoInverse, RankDeficientDiagonal) {
  RealMatrix d = RealMatrix::Zero(2, 2);
  d(0, 0) = 2.0;
  const RealMatrix p = pseudo_inverse(d);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
  EXPECT_EQ(p(1, 1), 0.0);
  EXPECT_EQ(p(0, 1), 0.0);
}

TEST(PseudoInverse, PenroseConditionsOnRandomTallMatrix) {
  const RealMatrix m = random_matrix(4, 2, 11);
  expect_penrose(m, pseudo_inverse(m), 1e-10);
}

TEST(PseudoInverse, PenroseConditionsUpTo200) {
  for (int n : {5, 37, 120, 200}) {
    const RealMatrix m = random_matrix(n, n - n / 5, 100u + static_cast<unsigned>(n));
    expect_penrose(m, pseudo_inverse(m), 1e-8);
  }
}

TEST(PseudoInverse, RankDeficientProductSatisfiesPenrose) {
  const RealMatrix m = random_matrix(30, 5, 3) * random_matrix(5, 20, 4);
  const RealMatrix p = pseudo_inverse(m);
  expect_penrose(m, p, 1e-8);
}

TEST(PseudoInverse, ComplexInput) {
  Eigen::MatrixXcd m(2, 2);
  m << std::complex<double>(1, 1), 2, 0, std::complex<double>(0, 3);
  const Eigen::MatrixXcd p = pseudo_inverse(m);
  EXPECT_LE((m * p - Eigen::MatrixXcd::Identity(2, 2)).norm(), 1e-14);
}

TEST(PseudoInverse, RejectsBadInput) {
  RealMatrix m = RealMatrix::Identity(2, 2);
  EXPECT_THROW(pseudo_inverse(RealMatrix(0, 0)), InvalidInput);
  EXPECT_THROW(pseudo_inverse(m, 0.0), InvalidInput);
  EXPECT_THROW(pseudo_inverse(m, 1.0), InvalidInput);
  m(0, 1) = std::nan("");
  EXPECT_THROW(pseudo_inverse(m), InvalidInput);
  m(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(pseudo_inverse(m), InvalidInput);
}

TEST(Eigendecompose, Diagonal) {
  RealMatrix k = RealMatrix::Zero(2, 2);
  k(0, 0) = 0.5;
  k(1, 1) = 1.0;
  const auto e = numerics::eigendecompose(k);
  EXPECT_NEAR(std::abs(e.values(0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(e.values(1) - 0.5), 0.0, 1e-15);
}

TEST(Eigendecompose, RotationHasConjugatePairOrderedByImaginaryPart) {
  RealMatrix k(2, 2);
  k << 0, -1, 1, 0;
  const auto e = numerics::eigendecompose(k);
  EXPECT_NEAR(std::abs(e.values(0) - std::complex<double>(0, 1)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(e.values(1) - std::complex<double>(0, -1)), 0.0, 1e-14);
}

TEST(Eigendecompose, CompanionOfCubeRootsOfUnity) {
  // z^3 - 1: roots from the closed form exp(2 pi i k / 3)
  RealMatrix c = RealMatrix::Zero(3, 3);
  c(1, 0) = 1.0;
  c(2, 1) = 1.0;
  c(0, 2) = 1.0;
  const auto e = numerics::eigendecompose(c);
  for (int k = 0; k < 3; ++k) {
    const std::complex<double> root = std::polar(1.0, 2.0 * M_PI * k / 3.0);
    double best = 1e9;
    for (int i = 0; i < 3; ++i) best = std::min(best, std::abs(e.values(i) - root));
    EXPECT_LT(best, 1e-12);
  }
  EXPECT_NEAR(std::abs(e.values(0) - 1.0), 0.0, 1e-12);  // real one first among equal moduli
}

TEST(Eigendecompose, ResidualAndNormalizationOnRandomMatrices) {
  for (int n : {3, 50, 200, 750}) {
    const RealMatrix k = random_matrix(n, n, static_cast<unsigned>(n));
    const auto e = numerics::eigendecompose(k);
    const Eigen::MatrixXcd kc = k.cast<std::complex<double>>();
    EXPECT_LE((kc * e.vectors - e.vectors * e.values.asDiagonal()).norm(), 1e-8 * k.norm()) << n;
    for (Eigen::Index i = 1; i < e.values.size(); ++i)
      EXPECT_GE(std::abs(e.values(i - 1)), std::abs(e.values(i)) - 1e-12);
    for (Eigen::Index j = 0; j < e.vectors.cols(); ++j) {
      EXPECT_NEAR(e.vectors.col(j).norm(), 1.0, 1e-12);
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(e.vectors(i, j)) > 1e-12) {
          EXPECT_GE(e.vectors(i, j).real(), 0.0);
          break;
        }
    }
  }
}

TEST(Eigendecompose, Deterministic) {
  const RealMatrix k = random_matrix(40, 40, 9);
  const auto a = numerics::eigendecompose(k), b = numerics::eigendecompose(k);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.vectors, b.vectors);
}

TEST(Eigendecompose, RejectsNonSquare) {
  EXPECT_THROW(numerics::eigendecompose(RealMatrix::Zero(2, 3)), InvalidInput);
}

TEST(HermitianSolve, IdentityAndDiagonal) {
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(3, 3);
  Eigen::MatrixXcd b(3, 1);
  b << 1.0, std::complex<double>(0, 2), -3.0;
  EXPECT_LE((numerics::hermitian_pd_solve(id, b) - b).norm(), 1e-15);
  Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 4.0;
  Eigen::MatrixXcd r(2, 1);
  r << 2.0, 4.0;
  const Eigen::MatrixXcd x = numerics::hermitian_pd_solve(d, r);
  EXPECT_NEAR(std::abs(x(0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(x(1) - 1.0), 0.0, 1e-15);
}

TEST(HermitianSolve, ShiftedToeplitzResidual) {
  // PSD Toeplitz from the autocorrelation of a random sequence, plus I.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const int len = 400, order = 60;
  std::vector<std::complex<double>> y(len);
  for (auto& v : y) v = {n(rng), n(rng)};
  Eigen::MatrixXcd m(order, order);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) {
      std::complex<double> s = 0;
      const int k = i - j;
      for (int t = 0; t + std::abs(k) < len; ++t)
        s += k >= 0 ? y[t + k] * std::conj(y[t]) : std::conj(y[t - k] * std::conj(y[t]));
      m(i, j) = s / static_cast<double>(len);
    }
  m += Eigen::MatrixXcd::Identity(order, order);
  Eigen::MatrixXcd rhs(order, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < order; ++i) rhs(i, j) = {n(rng), n(rng)};
  const Eigen::MatrixXcd x = numerics::hermitian_pd_solve(m, rhs);
  EXPECT_LE((m * x - rhs).norm(), 1e-10 * rhs.norm());
}

TEST(HermitianSolve, NonPositiveDefiniteIsNumericalError) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(2, 2);
  m(1, 1) = -1.0;
  EXPECT_THROW(numerics::hermitian_pd_solve(m, Eigen::MatrixXcd::Ones(2, 1)), NumericalError);
}

TEST(HermitianSolve, RejectsNonHermitian) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(2, 2);
  m(0, 1) = 0.5;
  EXPECT_THROW(numerics::hermitian_pd_solve(m, Eigen::MatrixXcd::Ones(2, 1)), InvalidInput);
}

TEST(KMeans, TwoSeparatedClusters) {
  PointSet p(4, 1);
  p << 0.0, 0.1, 10.0, 10.1;
  const auto r = numerics::kmeans(p, 2, 42);
  std::vector<double> c{r.centers(0, 0), r.centers(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_NEAR(c[0], 0.05, 1e-12);
  EXPECT_NEAR(c[1], 10.05, 1e-12);
}

TEST(KMeans, SingleClusterIsCentroid) {
  const RealMatrix p = random_matrix(57, 3, 8);
  const auto r = numerics::kmeans(p, 1, 1);
  EXPECT_LE((r.centers.row(0) - p.colwise().mean()).norm(), 1e-12);
}

TEST(KMeans, RecoversGaussianBlobs) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1.0);
  const double centers[4][2] = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  PointSet p(800, 2);
  std::vector<int> truth(800);
  for (int i = 0; i < 800; ++i) {
    truth[i] = i % 4;
    p(i, 0) = centers[i % 4][0] + n(rng);
    p(i, 1) = centers[i % 4][1] + n(rng);
  }
  const auto r = numerics::kmeans_best_of(p, 4, 3, 3);
  // Map each cluster to the majority blob and count agreement.
  int agree = 0;
  for (int c = 0; c < 4; ++c) {
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < 800; ++i)
      if (r.labels[i] == c) ++counts[truth[i]];
    agree += *std::max_element(counts, counts + 4);
  }
  EXPECT_GE(agree / 800.0, 0.99);
}

TEST(KMeans, DeterministicAndMonotone) {
  const RealMatrix p = random_matrix(500, 2, 21);
  const auto a = numerics::kmeans(p, 7, 123), b = numerics::kmeans(p, 7, 123);
  EXPECT_EQ(a.centers, b.centers);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 1; i < a.objective_history.size(); ++i)
    EXPECT_LE(a.objective_history[i], a.objective_history[i - 1] * (1 + 1e-12));
}

TEST(KMeans, LabelsIndexNearestCenter) {
  const RealMatrix p = random_matrix(300, 3, 5);
  const auto r = numerics::kmeans(p, 6, 9);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best;
    (r.centers.rowwise() - p.row(i)).rowwise().squaredNorm().minCoeff(&best);
    const double d_label = (r.centers.row(r.labels[i]) - p.row(i)).squaredNorm();
    const double d_best = (r.centers.row(best) - p.row(i)).squaredNorm();
    EXPECT_LE(d_label, d_best + 1e-9);
  }
}

TEST(KMeans, Errors) {
  PointSet p(3, 1);
  p << 1.0, 1.0, 2.0;
  EXPECT_THROW(numerics::kmeans(p, 3, 0), InvalidInput);  // only 2 distinct points
  EXPECT_THROW(numerics::kmeans(p, 0, 0), InvalidInput);
  EXPECT_NO_THROW(numerics::kmeans(p, 2, 0));
}
