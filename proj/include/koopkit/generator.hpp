#pragma once

// Infinitesimal generator from a fitted Koopman model, and the vector field
// it implies on the coordinate functions.

#include <cmath>
#include <complex>
#include <filesystem>

#include "koopkit/edmd.hpp"
#include "koopkit/errors.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/numerics.hpp"
#include "koopkit/types.hpp"

namespace koopkit::generator {

struct GeneratorModel {
  ComplexVector log_eigenvalues;  // ln(lambda)/dt, filtered entries exactly 0
  ComplexMatrix V;
  ComplexMatrix V_inv;
  ComplexMatrix modes;
  dictionary::Dictionary dict;
  double step_size = 1.0;
  Eigen::Index n_filtered = 0;

  // L = V diag(ln L / dt) V^{-1}
  ComplexMatrix matrix() const { return V * log_eigenvalues.asDiagonal() * V_inv; }
};

/// Principal complex logarithm with the negative real axis mapped to +i pi.
inline Complex principal_log(Complex z) {
  if (z.imag() == 0.0 && z.real() < 0.0) return {std::log(-z.real()), M_PI};
  return std::log(z);
}

inline GeneratorModel generator_matrix(const edmd::KoopmanModel& model,
                                       double pinv_tolerance = numerics::kDefaultPinvTolerance) {
  const double dt = model.step_size;
  if (!(dt > 0.0)) throw InvalidInput("generator_matrix: step size must be positive");
  GeneratorModel g;
  g.step_size = dt;
  g.dict = model.dict;
  g.modes = model.modes;
  g.V = model.eigenvectors;
  g.V_inv = numerics::pseudo_inverse(model.eigenvectors, pinv_tolerance);
  g.log_eigenvalues.resize(model.eigenvalues.size());
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
    const Complex lambda = model.eigenvalues(i);
    if (std::abs(lambda) < 1e-12) {
      g.log_eigenvalues(i) = 0.0;
      ++g.n_filtered;
      continue;
    }
    const Complex l = principal_log(lambda);
    if (l.real() < -2.0 / dt) {
      g.log_eigenvalues(i) = 0.0;
      ++g.n_filtered;
      continue;
    }
    g.log_eigenvalues(i) = l / dt;
  }
  return g;
}

/// v(x) = Re((ln L / dt) . phi(x) C)
inline StateVector reconstruct_vector_field(const GeneratorModel& g, const StateVector& x) {
  if (x.size() != g.dict.dim()) throw InvalidInput("reconstruct_vector_field: dimension mismatch");
  const ComplexVector phi = g.V.transpose() * g.dict.evaluate(x).cast<Complex>();
  const Eigen::RowVectorXcd v = phi.cwiseProduct(g.log_eigenvalues).transpose() * g.modes;
  return v.real().transpose();
}

inline RealMatrix reconstruct_vector_field(const GeneratorModel& g, const PointSet& points) {
  if (points.cols() != g.dict.dim()) throw InvalidInput("reconstruct_vector_field: dimension mismatch");
  const ComplexMatrix phi = dictionary::evaluate_matrix(g.dict, points).cast<Complex>() * g.V;
  return (phi * g.log_eigenvalues.asDiagonal() * g.modes).real();
}

inline void write_generator_eigs_csv(const std::filesystem::path& path, const GeneratorModel& g) {
  io::write_csv(path, {"re", "im"}, edmd::interleave(g.log_eigenvalues));
}

}  // namespace koopkit::generator
