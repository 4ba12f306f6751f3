#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "koopkit/generator.hpp"

using namespace koopkit;
using namespace koopkit::generator;

namespace {

edmd::KoopmanModel diagonal_model(const std::vector<Complex>& lambdas, double dt) {
  edmd::KoopmanModel m;
  const auto n = static_cast<Eigen::Index>(lambdas.size());
  m.eigenvalues = Eigen::Map<const ComplexVector>(lambdas.data(), n);
  m.eigenvectors = ComplexMatrix::Identity(n, n);
  m.modes = ComplexMatrix::Zero(n, 1);
  m.dict = dictionary::Dictionary::monomial(1, static_cast<int>(n) - 1);
  m.step_size = dt;
  return m;
}

}  // namespace

TEST(Generator, LogOfKnownEigenvalues) {
  const double dt = 0.1;
  const auto g = generator_matrix(diagonal_model({1.0, std::exp(-dt)}, dt));
  EXPECT_NEAR(std::abs(g.log_eigenvalues(0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(g.log_eigenvalues(1) - Complex(-1.0, 0.0)), 0.0, 1e-12);
  EXPECT_EQ(g.n_filtered, 0);
}

TEST(Generator, TinyAndFastDecayingEigenvaluesAreFiltered) {
  const auto g = generator_matrix(diagonal_model({1.0, 1e-15, std::exp(-3.0)}, 1.0));
  EXPECT_EQ(g.log_eigenvalues(1), Complex(0.0, 0.0));
  EXPECT_EQ(g.log_eigenvalues(2), Complex(0.0, 0.0));
  EXPECT_EQ(g.n_filtered, 2);
}

TEST(Generator, NegativeRealAxisUsesUpperBranch) {
  const Complex l = principal_log(Complex(-0.5, 0.0));
  EXPECT_NEAR(l.real(), std::log(0.5), 1e-15);
  EXPECT_DOUBLE_EQ(l.imag(), M_PI);
  EXPECT_DOUBLE_EQ(principal_log(Complex(-0.5, -0.0)).imag(), M_PI);
  const auto g = generator_matrix(diagonal_model({1.0, -0.5}, 1.0));
  EXPECT_NEAR(std::abs(g.log_eigenvalues(1) - Complex(-0.693147180559945, M_PI)), 0.0, 1e-12);
}

TEST(Generator, ExponentialOfGeneratorReproducesKoopmanMatrix) {
  RealMatrix M(2, 2);
  M << 0.9, 0.05, -0.05, 0.8;
  systems::LinearMap map(M, 0.1);
  systems::SnapshotPairSet pairs;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  pairs.x.resize(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) pairs.x.row(i) << u(rng), u(rng);
  pairs.y = pairs.x * M.transpose();
  pairs.step_size = 0.1;
  const auto model = edmd::fit(pairs, dictionary::Dictionary::monomial(2, 1), edmd::FitMode::Standard);
  const auto g = generator_matrix(model);
  const ComplexMatrix expL = g.V * (g.log_eigenvalues * 0.1).array().exp().matrix().asDiagonal() * g.V_inv;
  EXPECT_LT((expL - model.K.cast<Complex>()).norm(), 1e-10);
}

TEST(Generator, VectorFieldOfLinearDecay) {
  // x_{n+1} = e^{-dt} x_n is the time-dt flow of dx/dt = -x.
  const double dt = 0.05;
  systems::SnapshotPairSet pairs;
  pairs.x = Eigen::VectorXd::LinSpaced(100, -2.0, 2.0);
  pairs.y = pairs.x * std::exp(-dt);
  pairs.step_size = dt;
  const auto model = edmd::fit(pairs, dictionary::Dictionary::monomial(1, 3), edmd::FitMode::Standard);
  const auto g = generator_matrix(model);
  for (double x : {-1.5, -0.2, 0.0, 0.7, 1.9}) {
    const StateVector v = reconstruct_vector_field(g, StateVector(StateVector::Constant(1, x)));
    EXPECT_NEAR(v(0), -x, 1e-8) << x;
  }
  const PointSet pts = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  const RealMatrix batch = reconstruct_vector_field(g, pts);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(batch(i, 0), -pts(i, 0), 1e-8);
}
