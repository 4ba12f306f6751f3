#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "koopkit/newton.hpp"

using namespace koopkit;
using namespace koopkit::newton;

namespace {

Complex random_complex(std::mt19937_64& rng, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng)};
}

}  // namespace

TEST(NewtonMap, WorkedExample) {
  EXPECT_NEAR(std::abs(newton_map(1.0, 0.5) - Complex(-0.75, 0.0)), 0.0, 1e-15);
  EXPECT_THROW(newton_map(1.0, 0.0), SingularityError);
}

TEST(Conjugacy, QuadraticNormalFormIdentities) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const QuadraticConjugacy q(random_complex(rng) + Complex(0.1, 0.0), random_complex(rng), random_complex(rng));
    const Complex z = random_complex(rng);
    EXPECT_LT(std::abs(q.h(q.f(z)) - q.g(q.h(z))), 1e-10 * (1 + std::abs(q.g(q.h(z)))));
    // Independent form: a (a z^2 + b z + d) + b/2 == (a z + b/2)^2 + c.
    const Complex lhs = q.a * (q.a * z * z + q.b * z + q.d) + q.b / 2.0;
    EXPECT_LT(std::abs(lhs - (std::pow(q.a * z + q.b / 2.0, 2) + q.c())), 1e-10 * (1 + std::abs(lhs)));
    EXPECT_LT(std::abs(q.h(q.newton_f(z)) - newton_map(q.newton_c(), q.h(z))),
              1e-9 * (1 + std::abs(q.h(q.newton_f(z)))));
  }
}

TEST(Conjugacy, MobiusTurnsNewtonIntoSquaring) {
  std::mt19937_64 rng(2);
  for (Complex c : {Complex(1.0, 0.0), Complex(0.3, 0.8), Complex(-2.0, 0.5)}) {
    for (int i = 0; i < 20; ++i) {
      const Complex z = random_complex(rng);
      const Complex w = QuadraticConjugacy::mobius(c, z);
      EXPECT_LT(std::abs(QuadraticConjugacy::mobius(c, newton_map(c, z)) - w * w), 1e-9 * (1 + std::norm(w)));
    }
  }
}

TEST(Eigenfunctions, SatisfyKoopmanEigenEquation) {
  std::mt19937_64 rng(3);
  for (int k : {-2, -1, 1, 2, 3}) {
    for (int i = 0; i < 20; ++i) {
      Complex z = random_complex(rng);
      if (std::abs(z.imag()) < 0.05) z += Complex(0.0, 0.3);
      const double lhs = analytic_eigenfunction(1.0, k, newton_map(1.0, z));
      const double rhs = std::pow(2.0, k) * analytic_eigenfunction(1.0, k, z);
      EXPECT_NEAR(lhs, rhs, 1e-9 * (1 + std::abs(rhs))) << k;
    }
  }
  EXPECT_EQ(analytic_eigenfunction(1.0, 1, Complex(0.7, 0.0)), 0.0);
  EXPECT_TRUE(std::isinf(analytic_eigenfunction(1.0, -1, Complex(0.7, 0.0))));
  EXPECT_THROW(analytic_eigenfunction(1.0, 1, Complex(0.0, 1.0)), NumericalError);
}

TEST(RealNewton, ClosedFormMatchesIteration) {
  const auto traj = real_newton_trajectory(0.5, 20);
  for (int n = 0; n <= 20; ++n) {
    const double tol = 1e-14 * std::ldexp(1.0, n) * (1 + traj[static_cast<std::size_t>(n)] * traj[static_cast<std::size_t>(n)]);
    EXPECT_NEAR(closed_form_real_iterate(0.5, n), traj[static_cast<std::size_t>(n)], tol) << n;
  }
  EXPECT_NEAR(closed_form_real_iterate(1.0, 1), 0.0, 1e-15);
  EXPECT_THROW(real_newton_trajectory(1.0, 5), SingularityError);
  EXPECT_THROW(closed_form_real_iterate(0.0, 3), InvalidInput);
}

TEST(RealNewton, NearbyStartsSeparate) {
  const auto a = real_newton_trajectory(0.5, 80);
  const auto b = real_newton_trajectory(0.5 + 1e-12, 80);
  double max_gap = 0;
  for (std::size_t i = 0; i < a.size(); ++i) max_gap = std::max(max_gap, std::abs(a[i] - b[i]));
  EXPECT_GT(max_gap, 0.1);
}

TEST(ComplexNewton, OffAxisStartsConverge) {
  Complex z(0.3, 0.2), w(-1.1, -0.05);
  for (int i = 0; i < 60; ++i) {
    z = newton_map(1.0, z);
    w = newton_map(1.0, w);
  }
  EXPECT_LT(std::abs(z - Complex(0.0, 1.0)), 1e-12);
  EXPECT_LT(std::abs(w - Complex(0.0, -1.0)), 1e-12);
}

TEST(Fractal, RootPixelNeedsNoIterations) {
  const auto p = systems::ComplexPolynomial({-1.0, 0.0, 0.0, 1.0});
  const auto roots = p.roots();
  for (std::size_t r = 0; r < roots.size(); ++r) {
    const auto res = newton_pixel(p, p.derivative(), roots, roots[r], 0.01, 100);
    EXPECT_EQ(res.iterations, 0);
    EXPECT_EQ(res.root, static_cast<int>(r));
  }
}

TEST(Fractal, QuadraticBasinsSplitAtRealAxis) {
  const auto p = systems::ComplexPolynomial({1.0, 0.0, 1.0});
  const auto g = fractal_iteration_grid(p, Region{}, 41, 1e-6, 200);
  ASSERT_EQ(g.roots.size(), 2u);
  const int upper = g.roots[0].imag() > 0 ? 0 : 1;
  for (int iy = 0; iy < 41; ++iy)
    for (int ix = 0; ix < 41; ++ix) {
      const Complex z = g.pixel_center(ix, iy);
      const int r = g.root_index[g.index(ix, iy)];
      if (iy == 20) {
        EXPECT_EQ(z.imag(), 0.0);
        EXPECT_EQ(r, -1);
      } else {
        EXPECT_EQ(r, z.imag() > 0 ? upper : 1 - upper) << ix << "," << iy;
      }
    }
  const auto f = g.basin_fractions();
  EXPECT_NEAR(f[0], 20.0 / 41.0, 1e-12);
  EXPECT_NEAR(f[1], 20.0 / 41.0, 1e-12);
}

TEST(Fractal, ImageHeaders) {
  const auto p = systems::ComplexPolynomial({-1.0, 0.0, 0.0, 1.0});
  const auto g = fractal_iteration_grid(p, Region{}, 8, 6);
  const auto dir = std::filesystem::temp_directory_path() / "koopkit_fractal";
  std::filesystem::remove_all(dir);
  write_fractal_pgm(dir / "f.pgm", g);
  write_fractal_ppm(dir / "f.ppm", g);
  write_fractal_csv(dir / "f.csv", g);
  std::ifstream pgm(dir / "f.pgm", std::ios::binary), ppm(dir / "f.ppm", std::ios::binary);
  std::string magic;
  int w, h, maxv;
  pgm >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 8);
  EXPECT_EQ(h, 6);
  EXPECT_EQ(std::filesystem::file_size(dir / "f.pgm"), std::string("P5\n8 6\n255\n").size() + 48);
  ppm >> magic;
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(std::filesystem::file_size(dir / "f.ppm"), std::string("P6\n8 6\n255\n").size() + 144);
  EXPECT_EQ(io::read_csv(dir / "f.csv").rows.size(), 48u);
}

TEST(Fractal, InvalidArguments) {
  const auto p = systems::ComplexPolynomial({1.0, 0.0, 1.0});
  EXPECT_THROW(fractal_iteration_grid(p, Region{}, 0), InvalidInput);
  EXPECT_THROW(fractal_iteration_grid(p, Region{1.0, -1.0, -1.0, 1.0}, 4), InvalidInput);
  EXPECT_THROW(QuadraticConjugacy(0.0, 1.0, 1.0), InvalidInput);
}
