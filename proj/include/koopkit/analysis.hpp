#pragma once

// Ergodic decomposition from eigenvalue-one eigenfunctions, and spectrum
// scans over partial sampling windows.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "koopkit/dictionary.hpp"
#include "koopkit/edmd.hpp"
#include "koopkit/errors.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/numerics.hpp"
#include "koopkit/parallel.hpp"
#include "koopkit/systems.hpp"
#include "koopkit/types.hpp"

namespace koopkit::analysis {

inline constexpr double kDefaultEigTol = 0.02;
inline constexpr int kDefaultRestarts = 5;

struct Decomposition {
  std::vector<Eigen::Index> selected;  // eigenfunction indices with |lambda - 1| < eig_tol
  RealMatrix embedded;                 // per point: re/im parts of the selected eigenfunctions
  std::vector<int> labels;
  int n_clusters = 0;
  double objective = 0.0;
};

inline std::vector<Eigen::Index> eigenvalues_near_one(const ComplexVector& values, double eig_tol) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::abs(values(i) - Complex(1.0)) < eig_tol) idx.push_back(i);
  return idx;
}

/// Embeds points by their eigenvalue-one eigenfunctions and clusters the
/// embedding with k-means (best of `restarts` seeded runs).
inline Decomposition ergodic_decomposition(const edmd::KoopmanModel& model, const PointSet& points,
                                           double eig_tol, int n_clusters, std::uint64_t seed,
                                           int restarts = kDefaultRestarts) {
  if (!(eig_tol > 0.0)) throw InvalidInput("ergodic_decomposition: eig_tol must be positive");
  Decomposition out;
  out.selected = eigenvalues_near_one(model.eigenvalues, eig_tol);
  if (out.selected.empty())
    throw AnalysisError("ergodic_decomposition: no eigenvalue within eig_tol of 1");
  out.n_clusters = n_clusters;

  const ComplexMatrix phi = eigenfunction_matrix(model, points);
  const auto s = static_cast<Eigen::Index>(out.selected.size());
  out.embedded.resize(points.rows(), 2 * s);
  for (Eigen::Index j = 0; j < s; ++j) {
    out.embedded.col(2 * j) = phi.col(out.selected[static_cast<std::size_t>(j)]).real();
    out.embedded.col(2 * j + 1) = phi.col(out.selected[static_cast<std::size_t>(j)]).imag();
  }
  auto km = numerics::kmeans_best_of(out.embedded, n_clusters, seed, restarts);
  out.labels = std::move(km.labels);
  out.objective = km.objective;
  return out;
}

inline void write_decomposition_csv(const std::filesystem::path& path, const PointSet& points,
                                    const std::vector<int>& labels) {
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    throw InvalidInput("write_decomposition_csv: label count mismatch");
  RealMatrix t(points.rows(), points.cols() + 1);
  t.leftCols(points.cols()) = points;
  for (Eigen::Index i = 0; i < points.rows(); ++i) t(i, points.cols()) = labels[static_cast<std::size_t>(i)];
  auto header = dictionary::coordinate_header("x_", points.cols());
  header.push_back("label");
  io::write_csv(path, header, t);
}

// ---------------------------------------------------------------------------
// Window scans

struct Window {
  StateVector lower;
  StateVector upper;
};

struct WindowRecord {
  Window window;
  bool ok = false;
  std::string error;
  double max_re_lambda = std::nan("");
  ComplexVector eigenvalues;
  std::size_t pairs = 0;
};

struct WindowScanResult {
  std::vector<WindowRecord> windows;
};

/// For each window: uniform initial states inside it (successors may leave),
/// a dictionary built from that window's data, an EDMD fit, and the largest
/// real part of the spectrum. Failing windows are recorded and skipped.
inline WindowScanResult window_spectrum_scan(const systems::DiscreteSystem& system,
                                             const std::vector<Window>& windows,
                                             const dictionary::DictionaryConfig& dict_cfg, std::size_t n_samples,
                                             std::uint64_t seed, const edmd::FitOptions& fit_options = {}) {
  if (windows.empty()) throw InvalidInput("window_spectrum_scan: no windows");
  WindowScanResult result;
  result.windows.resize(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    WindowRecord& rec = result.windows[w];
    rec.window = windows[w];
    try {
      const auto pairs = systems::sample_pairs(system, systems::UniformBox{windows[w].lower, windows[w].upper},
                                               n_samples, 0, derive_seed(seed, w));
      rec.pairs = static_cast<std::size_t>(pairs.size());
      auto cfg = dict_cfg;
      cfg.seed = derive_seed(dict_cfg.seed, w);
      const auto dict = dictionary::build_dictionary(pairs.x, cfg);
      const auto model = edmd::fit(pairs, dict, fit_options);
      rec.eigenvalues = model.eigenvalues;
      rec.max_re_lambda = model.eigenvalues.real().maxCoeff();
      rec.ok = true;
    } catch (const Error& e) {
      rec.error = e.what();
    }
  }
  return result;
}

inline void write_window_scan_csv(const std::filesystem::path& path, const WindowScanResult& r) {
  if (r.windows.empty()) throw InvalidInput("write_window_scan_csv: empty result");
  const Eigen::Index d = r.windows.front().window.lower.size();
  std::vector<std::string> header{"window"};
  for (Eigen::Index j = 0; j < d; ++j) {
    header.push_back("lower_" + std::to_string(j + 1));
    header.push_back("upper_" + std::to_string(j + 1));
  }
  header.push_back("max_re_lambda");
  header.push_back("ok");
  std::vector<std::vector<double>> rows;
  for (std::size_t w = 0; w < r.windows.size(); ++w) {
    const auto& rec = r.windows[w];
    std::vector<double> row{static_cast<double>(w)};
    for (Eigen::Index j = 0; j < d; ++j) {
      row.push_back(rec.window.lower(j));
      row.push_back(rec.window.upper(j));
    }
    row.push_back(rec.max_re_lambda);
    row.push_back(rec.ok ? 1.0 : 0.0);
    rows.push_back(std::move(row));
  }
  io::write_csv(path, header, rows);
}

}  // namespace koopkit::analysis
