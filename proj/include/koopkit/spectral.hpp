#pragma once

// Moment-based approximation of the spectral measure of a unitary Koopman
// operator, via the regularized Christoffel-Darboux kernel.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "koopkit/errors.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/numerics.hpp"
#include "koopkit/types.hpp"

namespace koopkit::spectral {

inline constexpr int kDefaultGridSize = 2048;

struct MomentSequence {
  ComplexVector moments;  // m_0 .. m_N
  std::string observable;

  int order() const { return static_cast<int>(moments.size()) - 1; }
};

struct SpectralDensity {
  Eigen::VectorXd thetas;
  Eigen::VectorXd rho;
};

inline int default_order(std::size_t series_length) {
  return static_cast<int>(std::min<std::size_t>(500, series_length / 20));
}

/// m_k = (1/(M-k)) sum_{i<M-k} y_{i+k} conj(y_i), k = 0..N.
inline MomentSequence estimate_moments(const std::vector<Complex>& series, int n, std::string observable = "") {
  const auto m = static_cast<long>(series.size());
  if (n < 0) throw InvalidInput("estimate_moments: N must be nonnegative");
  if (n >= m) throw InvalidInput("estimate_moments: N must be smaller than the series length");
  MomentSequence out;
  out.observable = std::move(observable);
  out.moments.resize(n + 1);
  for (long k = 0; k <= n; ++k) {
    Complex sum = 0.0;
    for (long i = 0; i + k < m; ++i) sum += series[static_cast<std::size_t>(i + k)] * std::conj(series[static_cast<std::size_t>(i)]);
    out.moments(k) = sum / static_cast<double>(m - k);
  }
  return out;
}

inline Eigen::VectorXd uniform_grid(int size) {
  if (size < 1) throw InvalidInput("uniform_grid: size must be positive");
  Eigen::VectorXd t(size);
  for (int i = 0; i < size; ++i) t(i) = 2.0 * M_PI * i / size;
  return t;
}

/// Hermitian Toeplitz matrix with M[i][j] = m_{i-j} below the diagonal and
/// conj(m_{j-i}) above.
inline ComplexMatrix toeplitz(const MomentSequence& m) {
  const Eigen::Index n = m.moments.size();
  ComplexMatrix t(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      t(i, j) = i >= j ? m.moments(i - j) : std::conj(m.moments(j - i));
  // m_0 estimates a norm; drop round-off imaginary parts on the diagonal.
  for (Eigen::Index i = 0; i < n; ++i) t(i, i) = m.moments(0).real();
  return t;
}

/// rho(theta) ~ (N+1)/K(z,z) - 1, with K(z,z) = psi(z)^H (M + I)^{-1} psi(z)
/// and psi(z) = (1, z, ..., z^N).
inline SpectralDensity spectral_density(const MomentSequence& m, const Eigen::VectorXd& thetas) {
  const int n = m.order();
  if (n < 1) throw InvalidInput("spectral_density: N must be at least 1");
  if (thetas.size() == 0) throw InvalidInput("spectral_density: empty grid");
  numerics::require_finite(m.moments, "spectral_density");
  ComplexMatrix mt = toeplitz(m);
  mt.diagonal().array() += 1.0;

  ComplexMatrix psi(n + 1, thetas.size());
  for (Eigen::Index g = 0; g < thetas.size(); ++g) {
    for (int k = 0; k <= n; ++k) psi(k, g) = std::polar(1.0, k * thetas(g));
  }
  const ComplexMatrix sol = numerics::hermitian_pd_solve(mt, psi);
  SpectralDensity out;
  out.thetas = thetas;
  out.rho.resize(thetas.size());
  for (Eigen::Index g = 0; g < thetas.size(); ++g) {
    const double kernel = psi.col(g).dot(sol.col(g)).real();
    out.rho(g) = (n + 1) / kernel - 1.0;
  }
  return out;
}

inline SpectralDensity spectral_density(const MomentSequence& m, int grid_size = kDefaultGridSize) {
  return spectral_density(m, uniform_grid(grid_size));
}

inline void write_density_csv(const std::filesystem::path& path, const SpectralDensity& d) {
  RealMatrix t(d.thetas.size(), 2);
  t.col(0) = d.thetas;
  t.col(1) = d.rho;
  io::write_csv(path, {"theta", "rho"}, t);
}

inline void write_moments_csv(const std::filesystem::path& path, const MomentSequence& m) {
  RealMatrix t(m.moments.size(), 3);
  for (Eigen::Index k = 0; k < m.moments.size(); ++k) {
    t(k, 0) = static_cast<double>(k);
    t(k, 1) = m.moments(k).real();
    t(k, 2) = m.moments(k).imag();
  }
  io::write_csv(path, {"k", "re", "im"}, t);
}

}  // namespace koopkit::spectral
