#pragma once

// Extended dynamic mode decomposition: the finite Koopman matrix, its
// eigenfunctions, Koopman modes and multi-step prediction.

#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "koopkit/dictionary.hpp"
#include "koopkit/errors.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/numerics.hpp"
#include "koopkit/systems.hpp"
#include "koopkit/types.hpp"

namespace koopkit::edmd {

enum class FitMode { Standard, PaperLiteral };

inline std::string fit_mode_name(FitMode m) { return m == FitMode::Standard ? "standard" : "paper"; }

inline FitMode parse_fit_mode(const std::string& s) {
  if (s == "standard") return FitMode::Standard;
  if (s == "paper" || s == "paper-literal") return FitMode::PaperLiteral;
  throw ConfigError("unknown fit mode '" + s + "' (expected standard or paper)");
}

struct FitOptions {
  FitMode mode = FitMode::Standard;
  double pinv_tolerance = numerics::kDefaultPinvTolerance;
  // Trailing fraction of pairs held out of the fit for residual reporting.
  // Applied only when at least 10 pairs are available.
  double heldout_fraction = 0.1;
};

struct FitResiduals {
  double reconstruction = 0.0;      // RMS |Re(G V C) - X| over training points
  double training_one_step = 0.0;   // mean |x_hat_1 - y| over training pairs
  double heldout_one_step = 0.0;    // same over held-out pairs (0 if none)
  double eigen_residual = 0.0;      // |K V - V L| / |K|
  double max_imaginary = 0.0;       // largest imaginary part norm in one-step predictions
};

struct KoopmanModel {
  RealMatrix K;
  ComplexVector eigenvalues;
  ComplexMatrix eigenvectors;  // V, columns are right eigenvectors of K
  ComplexMatrix modes;         // C, N_D x d
  dictionary::Dictionary dict;
  double step_size = 1.0;
  FitMode fit_mode = FitMode::Standard;
  FitResiduals residuals;
  Eigen::Index n_train = 0;
  Eigen::Index n_heldout = 0;
  std::string system;

  Eigen::Index size() const { return K.rows(); }
  Eigen::Index state_dim() const { return dict.dim(); }
};

/// Eigenfunction values phi(x) = D(x)^T V.
inline ComplexVector eigenfunction_eval(const KoopmanModel& model, const StateVector& x) {
  const Eigen::VectorXd psi = model.dict.evaluate(x);
  return model.eigenvectors.transpose() * psi.cast<Complex>();
}

/// Eigenfunction samples, one row per point: D(points) V.
inline ComplexMatrix eigenfunction_matrix(const KoopmanModel& model, const PointSet& points) {
  return dictionary::evaluate_matrix(model.dict, points).cast<Complex>() * model.eigenvectors;
}

struct Prediction {
  PointSet states;            // row m is x_hat_m
  std::vector<double> imag;   // |Im| of the complex reconstruction per step
};

inline Prediction predict_detailed(const KoopmanModel& model, const StateVector& x0, int n) {
  if (n < 0) throw InvalidInput("predict: n must be nonnegative");
  if (x0.size() != model.state_dim()) throw InvalidInput("predict: dimension mismatch");
  ComplexVector phi = eigenfunction_eval(model, x0);
  Prediction out;
  out.states.resize(n + 1, x0.size());
  out.imag.resize(static_cast<std::size_t>(n) + 1);
  for (int m = 0; m <= n; ++m) {
    const Eigen::RowVectorXcd x = phi.transpose() * model.modes;
    out.states.row(m) = x.real();
    out.imag[static_cast<std::size_t>(m)] = x.imag().norm();
    phi = phi.cwiseProduct(model.eigenvalues);
  }
  return out;
}

/// x_hat_m = Re(phi(x0) diag(L^m) C), m = 0..n.
inline PointSet predict(const KoopmanModel& model, const StateVector& x0, int n) {
  return predict_detailed(model, x0, n).states;
}

namespace detail {

// One-step predictions Re(Phi L C) for all rows of `phi`.
inline RealMatrix one_step(const KoopmanModel& model, const ComplexMatrix& phi, double* max_imag) {
  const ComplexMatrix out = phi * model.eigenvalues.asDiagonal() * model.modes;
  if (max_imag) *max_imag = std::max(*max_imag, out.imag().rowwise().norm().maxCoeff());
  return out.real();
}

inline double mean_row_error(const RealMatrix& a, const RealMatrix& b) {
  if (a.rows() == 0) return 0.0;
  return (a - b).rowwise().norm().mean();
}

}  // namespace detail

/// Fits the Koopman matrix on snapshot pairs. Standard mode solves the
/// least-squares problem K = (G^T G)^+ G^T A; paper mode evaluates
/// (G^T G)^+ A^T A / N_D^2.
inline KoopmanModel fit(const systems::SnapshotPairSet& pairs, const dictionary::Dictionary& dict,
                        const FitOptions& options = {}) {
  pairs.validate();
  if (dict.size() == 0) throw FitError("fit: dictionary has no observables");
  if (dict.dim() != pairs.dim()) throw FitError("fit: dictionary dimension does not match the pairs");
  if (!(options.heldout_fraction >= 0.0 && options.heldout_fraction < 1.0))
    throw InvalidInput("fit: heldout_fraction must lie in [0, 1)");

  const Eigen::Index n = pairs.size();
  Eigen::Index heldout = 0;
  if (n >= 10) heldout = static_cast<Eigen::Index>(std::floor(options.heldout_fraction * static_cast<double>(n)));
  const Eigen::Index train = n - heldout;

  KoopmanModel model;
  model.dict = dict;
  model.step_size = pairs.step_size;
  model.fit_mode = options.mode;
  model.n_train = train;
  model.n_heldout = heldout;
  model.system = pairs.system;

  const PointSet x_train = pairs.x.topRows(train);
  const RealMatrix g = dictionary::evaluate_matrix(dict, x_train);
  const RealMatrix a = dictionary::evaluate_matrix(dict, pairs.y.topRows(train));
  if (!numerics::all_finite(g) || !numerics::all_finite(a)) throw FitError("fit: non-finite dictionary values");
  if (g.norm() == 0.0) throw FitError("fit: dictionary matrix is identically zero");

  RealMatrix gram(g.cols(), g.cols());
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(g.transpose());
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  const RealMatrix p = numerics::pseudo_inverse(gram, options.pinv_tolerance);

  if (options.mode == FitMode::Standard) {
    model.K = p * (g.transpose() * a);
  } else {
    const double nd = static_cast<double>(dict.size());
    model.K = p * (a.transpose() * a) / (nd * nd);
  }

  auto eig = numerics::eigendecompose(model.K);
  model.eigenvalues = std::move(eig.values);
  model.eigenvectors = std::move(eig.vectors);
  const double k_norm = model.K.norm();
  model.residuals.eigen_residual =
      k_norm > 0.0 ? (model.K.cast<Complex>() * model.eigenvectors -
                      model.eigenvectors * model.eigenvalues.asDiagonal())
                             .norm() /
                         k_norm
                   : 0.0;

  // Coordinate expansion B (N_D x d): exact selector when x_j is in the
  // dictionary, least-squares projection otherwise. Then C = V^{-1} B.
  const Eigen::Index d = pairs.dim();
  RealMatrix b(dict.size(), d);
  RealMatrix projected;
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::Index idx = dict.coordinate_index(j);
    if (idx >= 0) {
      b.col(j).setZero();
      b(idx, j) = 1.0;
    } else {
      if (projected.size() == 0) projected = p * (g.transpose() * x_train);
      b.col(j) = projected.col(j);
    }
  }
  Eigen::ColPivHouseholderQR<ComplexMatrix> qr(model.eigenvectors);
  model.modes = qr.solve(b.cast<Complex>());
  if (!numerics::all_finite(model.modes)) throw FitError("fit: Koopman modes are not finite");

  const ComplexMatrix phi = g.cast<Complex>() * model.eigenvectors;
  const RealMatrix recon = (phi * model.modes).real();
  model.residuals.reconstruction =
      std::sqrt((recon - x_train).rowwise().squaredNorm().mean());
  model.residuals.training_one_step = detail::mean_row_error(
      detail::one_step(model, phi, &model.residuals.max_imaginary), pairs.y.topRows(train));
  if (heldout > 0) {
    const ComplexMatrix phi_h = eigenfunction_matrix(model, pairs.x.bottomRows(heldout));
    model.residuals.heldout_one_step = detail::mean_row_error(
        detail::one_step(model, phi_h, &model.residuals.max_imaginary), pairs.y.bottomRows(heldout));
  }
  return model;
}

inline KoopmanModel fit(const systems::SnapshotPairSet& pairs, const dictionary::Dictionary& dict,
                        FitMode mode) {
  FitOptions o;
  o.mode = mode;
  return fit(pairs, dict, o);
}

inline io::Json residuals_json(const FitResiduals& r) {
  return {{"reconstruction", r.reconstruction},
          {"training_one_step", r.training_one_step},
          {"heldout_one_step", r.heldout_one_step},
          {"eigen_residual", r.eigen_residual},
          {"max_imaginary", r.max_imaginary}};
}

// ---------------------------------------------------------------------------
// Persistence

inline std::vector<std::string> complex_header(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> h;
  for (Eigen::Index j = 0; j < n; ++j) {
    h.push_back("re_" + prefix + std::to_string(j + 1));
    h.push_back("im_" + prefix + std::to_string(j + 1));
  }
  return h;
}

inline RealMatrix interleave(const ComplexMatrix& m) {
  RealMatrix out(m.rows(), 2 * m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    out.col(2 * j) = m.col(j).real();
    out.col(2 * j + 1) = m.col(j).imag();
  }
  return out;
}

inline ComplexMatrix deinterleave(const RealMatrix& m) {
  if (m.cols() % 2 != 0) throw IoError("complex table needs an even column count");
  ComplexMatrix out(m.rows(), m.cols() / 2);
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = Complex(m(i, 2 * j), m(i, 2 * j + 1));
  return out;
}

inline void write_eigenvalues_csv(const std::filesystem::path& path, const ComplexVector& values) {
  io::write_csv(path, {"re", "im"}, interleave(values));
}

inline std::vector<std::string> save_model(const KoopmanModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_eigenvalues_csv(dir / "eigenvalues.csv", model.eigenvalues);
  io::write_csv(dir / "modes.csv", complex_header("x", model.modes.cols()), interleave(model.modes));
  io::write_csv(dir / "eigvecs.csv", complex_header("v", model.eigenvectors.cols()),
                interleave(model.eigenvectors));
  io::write_csv(dir / "koopman_matrix.csv", dictionary::coordinate_header("k_", model.K.cols()), model.K);
  dictionary::save_dictionary(model.dict, dir / "dictionary.json", dir / "centers.csv");
  io::Json meta;
  meta["fit_mode"] = fit_mode_name(model.fit_mode);
  meta["step_size"] = model.step_size;
  meta["system"] = model.system;
  meta["n_observables"] = model.size();
  meta["state_dim"] = model.state_dim();
  meta["n_train"] = model.n_train;
  meta["n_heldout"] = model.n_heldout;
  meta["residuals"] = residuals_json(model.residuals);
  meta["library_version"] = kVersion;
  io::write_json(dir / "meta.json", meta);
  return {"eigenvalues.csv", "modes.csv", "eigvecs.csv", "koopman_matrix.csv",
          "dictionary.json", "centers.csv", "meta.json"};
}

inline KoopmanModel load_model(const std::filesystem::path& dir) {
  KoopmanModel model;
  model.dict = dictionary::load_dictionary(dir / "dictionary.json", dir / "centers.csv");
  const io::Json meta = io::read_json(dir / "meta.json");
  try {
    model.fit_mode = parse_fit_mode(meta.at("fit_mode").get<std::string>());
    model.step_size = meta.at("step_size").get<double>();
    model.system = meta.at("system").get<std::string>();
    model.n_train = meta.at("n_train").get<Eigen::Index>();
    model.n_heldout = meta.at("n_heldout").get<Eigen::Index>();
    const auto& r = meta.at("residuals");
    model.residuals.reconstruction = r.at("reconstruction").get<double>();
    model.residuals.training_one_step = r.at("training_one_step").get<double>();
    model.residuals.heldout_one_step = r.at("heldout_one_step").get<double>();
    model.residuals.eigen_residual = r.at("eigen_residual").get<double>();
    model.residuals.max_imaginary = r.at("max_imaginary").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json: " + std::string(e.what()));
  }
  model.eigenvalues = deinterleave(io::read_csv(dir / "eigenvalues.csv").as_matrix()).col(0);
  model.modes = deinterleave(io::read_csv(dir / "modes.csv").as_matrix());
  model.eigenvectors = deinterleave(io::read_csv(dir / "eigvecs.csv").as_matrix());
  model.K = io::read_csv(dir / "koopman_matrix.csv").as_matrix();
  const Eigen::Index nd = model.dict.size();
  if (model.K.rows() != nd || model.eigenvalues.size() != nd || model.eigenvectors.rows() != nd ||
      model.modes.rows() != nd || model.modes.cols() != model.dict.dim())
    throw IoError("model directory " + dir.string() + " has inconsistent shapes");
  return model;
}

}  // namespace koopkit::edmd
