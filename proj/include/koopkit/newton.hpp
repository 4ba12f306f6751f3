#pragma once

// Newton-Raphson on quadratics: conjugacy to the normal form z^2 + c,
// analytic Koopman eigenfunctions, the chaotic real-line recurrence, and
// basin maps for general polynomials.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "koopkit/errors.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/parallel.hpp"
#include "koopkit/systems.hpp"
#include "koopkit/types.hpp"

namespace koopkit::newton {

using systems::ComplexPolynomial;

inline StateVector as_state(Complex z) { return StateVector{{z.real(), z.imag()}}; }

/// N_c(z) = (z^2 - c) / (2z), Newton's method on z^2 + c.
inline Complex newton_map(Complex c, Complex z) {
  if (z == Complex(0.0)) throw SingularityError("newton_map: derivative vanishes at z = 0", as_state(z));
  return (z * z - c) / (2.0 * z);
}

/// f(z) = a z^2 + b z + d and its normal forms under h(z) = a z + b/2.
struct QuadraticConjugacy {
  Complex a, b, d;

  QuadraticConjugacy(Complex a_, Complex b_, Complex d_) : a(a_), b(b_), d(d_) {
    if (a == Complex(0.0)) throw InvalidInput("QuadraticConjugacy: leading coefficient must be nonzero");
  }

  // h o f = g_c o h with g_c(z) = z^2 + c
  Complex c() const { return a * d + b / 2.0 - b * b / 4.0; }
  // h o N_f = N_{c'} o h, where N_f is Newton's method on f
  Complex newton_c() const { return a * d - b * b / 4.0; }

  Complex f(Complex z) const { return (a * z + b) * z + d; }
  Complex h(Complex z) const { return a * z + b / 2.0; }
  Complex g(Complex z) const { return z * z + c(); }
  Complex newton_f(Complex z) const {
    const Complex df = 2.0 * a * z + b;
    if (df == Complex(0.0)) throw SingularityError("newton_f: derivative vanishes", as_state(z));
    return z - f(z) / df;
  }
  Complex h0(Complex z) const { return mobius(newton_c(), z); }

  static Complex mobius(Complex c, Complex z) {
    const Complex s = std::sqrt(c) * Complex(0.0, 1.0);
    return (z + s) / (z - s);
  }
};

/// psi_k(z) = (ln |(z + i sqrt c)/(z - i sqrt c)|)^k, eigenvalue 2^k of the
/// Koopman operator of N_c. Zero on the real line for c > 0 and k > 0,
/// +infinity there for k < 0.
inline double analytic_eigenfunction(Complex c, int k, Complex z) {
  const Complex s = std::sqrt(c) * Complex(0.0, 1.0);
  const double num = std::abs(z + s), den = std::abs(z - s);
  if (num == 0.0 || den == 0.0)
    throw NumericalError("analytic_eigenfunction: diverges at the roots");
  const double l = std::log(num / den);
  if (k < 0 && l == 0.0) return std::numeric_limits<double>::infinity();
  return std::pow(l, k);
}

/// z(n) = -cot(c1 2^n), c1 = arctan(-1/z0): the n-th Newton iterate for
/// z^2 + 1 on the real line. The angle is reduced modulo pi before cot.
inline double closed_form_real_iterate(double z0, int n) {
  if (z0 == 0.0) throw InvalidInput("closed_form_real_iterate: z0 must be nonzero");
  if (n < 0) throw InvalidInput("closed_form_real_iterate: n must be nonnegative");
  const double c1 = std::atan(-1.0 / z0);
  const double angle = std::ldexp(c1, n);
  if (!std::isfinite(angle)) throw NumericalError("closed_form_real_iterate: angle overflows");
  const double reduced = std::fmod(angle, M_PI);
  if (reduced == 0.0) throw SingularityError("closed_form_real_iterate: cot is singular", StateVector{{z0}});
  return -1.0 / std::tan(reduced);
}

/// z_0 .. z_n under direct iteration of N_1 on the real line.
inline std::vector<double> real_newton_trajectory(double z0, std::size_t n) {
  std::vector<double> z(n + 1);
  z[0] = z0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double x = z[i - 1];
    if (x == 0.0) throw SingularityError("real Newton iteration hit z = 0", StateVector{{x}});
    z[i] = (x * x - 1.0) / (2.0 * x);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Basin maps

struct Region {
  double x_min = -2.0, x_max = 2.0, y_min = -2.0, y_max = 2.0;
};

struct FractalGrid {
  Region region;
  int width = 0;
  int height = 0;
  double tol = 0.01;
  int max_iter = 100;
  std::vector<Complex> roots;
  std::vector<int> iterations;  // row-major, row 0 at y_max
  std::vector<int> root_index;  // -1 when not converged

  Complex pixel_center(int ix, int iy) const {
    const double x = region.x_min + (region.x_max - region.x_min) * (ix + 0.5) / width;
    const double y = region.y_max - (region.y_max - region.y_min) * (iy + 0.5) / height;
    return {x, y};
  }
  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * width + ix; }

  // Fraction of all pixels converging to each root.
  std::vector<double> basin_fractions() const {
    std::vector<double> f(roots.size(), 0.0);
    for (int r : root_index)
      if (r >= 0) f[static_cast<std::size_t>(r)] += 1.0;
    for (double& v : f) v /= static_cast<double>(root_index.size());
    return f;
  }
};

struct PixelResult {
  int iterations;
  int root;
};

/// Iterates z - p(z)/p'(z) until |z_{n+1} - z_n| < tol or max_iter steps.
/// The count is the number of steps of size at least tol.
inline PixelResult newton_pixel(const ComplexPolynomial& p, const ComplexPolynomial& dp,
                                const std::vector<Complex>& roots, Complex z, double tol, int max_iter) {
  for (int n = 0; n < max_iter; ++n) {
    const Complex d = dp(z);
    if (d == Complex(0.0)) return {max_iter, -1};
    const Complex next = z - p(z) / d;
    if (!std::isfinite(next.real()) || !std::isfinite(next.imag())) return {max_iter, -1};
    if (std::abs(next - z) < tol) {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < roots.size(); ++r) {
        const double dist = std::abs(next - roots[r]);
        if (dist < best_d) {
          best_d = dist;
          best = static_cast<int>(r);
        }
      }
      return {n, best};
    }
    z = next;
  }
  return {max_iter, -1};
}

inline FractalGrid fractal_iteration_grid(const ComplexPolynomial& poly, const Region& region, int width,
                                          int height, double tol = 0.01, int max_iter = 100) {
  if (width < 1 || height < 1) throw InvalidInput("fractal_iteration_grid: resolution must be positive");
  if (!(region.x_max > region.x_min && region.y_max > region.y_min))
    throw InvalidInput("fractal_iteration_grid: empty region");
  if (!(tol > 0.0)) throw InvalidInput("fractal_iteration_grid: tol must be positive");
  if (max_iter < 1) throw InvalidInput("fractal_iteration_grid: max_iter must be positive");
  if (poly.degree() < 1) throw InvalidInput("fractal_iteration_grid: polynomial must be nonconstant");
  FractalGrid g;
  g.region = region;
  g.width = width;
  g.height = height;
  g.tol = tol;
  g.max_iter = max_iter;
  g.roots = poly.roots();
  g.iterations.resize(static_cast<std::size_t>(width) * height);
  g.root_index.resize(g.iterations.size());
  const ComplexPolynomial dp = poly.derivative();
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t row) {
    const int iy = static_cast<int>(row);
    for (int ix = 0; ix < width; ++ix) {
      const auto r = newton_pixel(poly, dp, g.roots, g.pixel_center(ix, iy), tol, max_iter);
      g.iterations[g.index(ix, iy)] = r.iterations;
      g.root_index[g.index(ix, iy)] = r.root;
    }
  });
  return g;
}

inline FractalGrid fractal_iteration_grid(const ComplexPolynomial& poly, const Region& region, int resolution,
                                          double tol = 0.01, int max_iter = 100) {
  return fractal_iteration_grid(poly, region, resolution, resolution, tol, max_iter);
}

inline void write_fractal_csv(const std::filesystem::path& path, const FractalGrid& g) {
  std::vector<std::vector<double>> rows;
  rows.reserve(g.iterations.size());
  for (int iy = 0; iy < g.height; ++iy)
    for (int ix = 0; ix < g.width; ++ix) {
      const Complex z = g.pixel_center(ix, iy);
      rows.push_back({z.real(), z.imag(), static_cast<double>(g.iterations[g.index(ix, iy)]),
                      static_cast<double>(g.root_index[g.index(ix, iy)])});
    }
  io::write_csv(path, {"x", "y", "iterations", "root_index"}, rows);
}

/// Binary graymap of iteration counts, brighter = fewer iterations.
inline void write_fractal_pgm(const std::filesystem::path& path, const FractalGrid& g) {
  io::ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  for (int it : g.iterations)
    out.put(static_cast<char>(255 - (255 * it) / g.max_iter));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Binary pixmap: hue per root, shaded by iteration count; black where the
/// iteration did not converge.
inline void write_fractal_ppm(const std::filesystem::path& path, const FractalGrid& g) {
  static const unsigned char palette[6][3] = {{230, 57, 70},  {69, 123, 157}, {42, 157, 143},
                                              {233, 196, 106}, {131, 56, 236}, {244, 162, 97}};
  io::ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << g.width << ' ' << g.height << "\n255\n";
  for (std::size_t i = 0; i < g.iterations.size(); ++i) {
    const int r = g.root_index[i];
    const double shade = 1.0 - 0.8 * static_cast<double>(g.iterations[i]) / g.max_iter;
    for (int c = 0; c < 3; ++c) {
      const unsigned char v = r < 0 ? 0 : static_cast<unsigned char>(palette[r % 6][c] * shade);
      out.put(static_cast<char>(v));
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace koopkit::newton
