#pragma once

// Dense linear algebra and clustering used by every other module.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopkit/errors.hpp"
#include "koopkit/random.hpp"
#include "koopkit/types.hpp"

namespace koopkit::numerics {

inline constexpr double kDefaultPinvTolerance = 1e-10;

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(std::abs(m(i, j)))) return false;
  return true;
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (!all_finite(m)) throw InvalidInput(what + ": non-finite entries");
}

/// Moore-Penrose pseudo-inverse via a thin SVD. Singular values below
/// `rel_tol * sigma_max` are treated as zero. Works for real and complex
/// matrices.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> pseudo_inverse(
    const Eigen::MatrixBase<Derived>& m, double rel_tol = kDefaultPinvTolerance) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m.size() == 0) throw InvalidInput("pseudo_inverse: empty matrix");
  if (!(rel_tol > 0.0 && rel_tol < 1.0))
    throw InvalidInput("pseudo_inverse: rel_tol must lie in (0, 1)");
  require_finite(m, "pseudo_inverse");

  Eigen::BDCSVD<Mat> svd(m.eval(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  Mat result = Mat::Zero(m.cols(), m.rows());
  if (sigma.size() == 0 || sigma(0) == 0.0) return result;
  const double cutoff = rel_tol * sigma(0);
  Eigen::Index rank = 0;
  while (rank < sigma.size() && sigma(rank) > cutoff) ++rank;
  const auto& u = svd.matrixU();
  const auto& v = svd.matrixV();
  Mat scaled_v = v.leftCols(rank);
  for (Eigen::Index j = 0; j < rank; ++j) scaled_v.col(j) /= sigma(j);
  result.noalias() = scaled_v * u.leftCols(rank).adjoint();
  return result;
}

struct EigenDecomposition {
  ComplexVector values;   // sorted by descending modulus
  ComplexMatrix vectors;  // unit 2-norm columns, K V = V diag(values)
};

namespace detail {

inline bool eigen_order(const Complex& a, const Complex& b) {
  const double ma = std::abs(a), mb = std::abs(b);
  if (ma != mb) return ma > mb;
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() > b.imag();
}

inline void normalize_eigenvector(Eigen::Ref<ComplexVector> v) {
  const double norm = v.norm();
  if (norm == 0.0) return;
  v /= norm;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i).real() < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace detail

/// Eigenvalues and right eigenvectors of a real square matrix, with a fixed
/// ordering and sign convention so results are reproducible.
inline EigenDecomposition eigendecompose(const RealMatrix& k) {
  if (k.rows() != k.cols() || k.rows() == 0)
    throw InvalidInput("eigendecompose: matrix must be square and nonempty");
  require_finite(k, "eigendecompose");

  Eigen::EigenSolver<RealMatrix> solver(k, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigendecompose: eigenvalue iteration did not converge");

  const ComplexVector values = solver.eigenvalues();
  const ComplexMatrix vectors = solver.eigenvectors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return detail::eigen_order(values(a), values(b));
  });

  EigenDecomposition out;
  out.values.resize(values.size());
  out.vectors.resize(vectors.rows(), vectors.cols());
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.values(j) = values(src);
    out.vectors.col(j) = vectors.col(src);
    detail::normalize_eigenvector(out.vectors.col(j));
  }
  return out;
}

/// Solves m X = rhs for Hermitian positive-definite m (Cholesky).
inline ComplexMatrix hermitian_pd_solve(const ComplexMatrix& m, const ComplexMatrix& rhs) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw InvalidInput("hermitian_pd_solve: matrix must be square and nonempty");
  if (rhs.rows() != m.rows())
    throw InvalidInput("hermitian_pd_solve: right-hand side has wrong row count");
  require_finite(m, "hermitian_pd_solve");
  require_finite(rhs, "hermitian_pd_solve");
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
    throw InvalidInput("hermitian_pd_solve: matrix is not Hermitian");

  Eigen::LLT<ComplexMatrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError("hermitian_pd_solve: matrix is not positive definite");
  return llt.solve(rhs);
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansOptions {
  int max_iterations = 300;
  double relative_tolerance = 1e-9;
};

struct KMeansResult {
  PointSet centers;
  std::vector<int> labels;
  double objective = 0.0;  // sum of squared distances to the assigned center
  int iterations = 0;
  std::vector<double> objective_history;
};

inline std::size_t count_distinct_rows(const PointSet& points) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(points.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (points(a, j) < points(b, j)) return true;
      if (points(a, j) > points(b, j)) return false;
    }
    return false;
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t distinct = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (less(idx[i - 1], idx[i])) ++distinct;
  return distinct;
}

namespace detail {

inline double assign_labels(const PointSet& points, const PointSet& centers,
                            std::vector<int>& labels) {
  const Eigen::VectorXd center_norms = centers.rowwise().squaredNorm();
  const Eigen::Index n = points.rows();
  labels.resize(static_cast<std::size_t>(n));
  double objective = 0.0;
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index begin = 0; begin < n; begin += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - begin);
    const RealMatrix cross = points.middleRows(begin, rows) * centers.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const double d = center_norms(c) - 2.0 * cross(r, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      labels[static_cast<std::size_t>(begin + r)] = static_cast<int>(best);
      objective += (points.row(begin + r) - centers.row(best)).squaredNorm();
    }
  }
  return objective;
}

inline PointSet seed_plus_plus(const PointSet& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  PointSet centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  Eigen::VectorXd dist2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= dist2(i);
        if (target < 0.0 && dist2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
      while (dist2(chosen) == 0.0 && chosen > 0) --chosen;
    }
    centers.row(c) = points.row(chosen);
    dist2 = dist2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Deterministic for fixed
/// (points, k, seed). Returned labels index the nearest returned center.
inline KMeansResult kmeans(const PointSet& points, int k, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  if (k < 1) throw InvalidInput("kmeans: k must be at least 1");
  if (points.rows() == 0) throw InvalidInput("kmeans: no points");
  require_finite(points, "kmeans");
  if (count_distinct_rows(points) < static_cast<std::size_t>(k))
    throw InvalidInput("kmeans: k exceeds the number of distinct points");

  std::mt19937_64 rng = make_rng(seed);
  KMeansResult result;
  result.centers = detail::seed_plus_plus(points, k, rng);
  result.objective = detail::assign_labels(points, result.centers, result.labels);
  result.objective_history.push_back(result.objective);

  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));
  for (int it = 1; it <= options.max_iterations; ++it) {
    PointSet sums = PointSet::Zero(k, points.cols());
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int label = result.labels[static_cast<std::size_t>(i)];
      sums.row(label) += points.row(i);
      ++counts[static_cast<std::size_t>(label)];
    }
    // Empty clusters keep their previous center.
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        result.centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);

    const double previous = result.objective;
    result.objective = detail::assign_labels(points, result.centers, result.labels);
    result.objective_history.push_back(result.objective);
    result.iterations = it;
    if (previous - result.objective <= options.relative_tolerance * previous) break;
  }
  return result;
}

/// Best-objective result over `restarts` runs with seeds derived from `seed`.
inline KMeansResult kmeans_best_of(const PointSet& points, int k, std::uint64_t seed,
                                   int restarts, const KMeansOptions& options = {}) {
  if (restarts < 1) throw InvalidInput("kmeans_best_of: restarts must be at least 1");
  KMeansResult best = kmeans(points, k, derive_seed(seed, 0), options);
  for (int r = 1; r < restarts; ++r) {
    KMeansResult candidate = kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(r)), options);
    if (candidate.objective < best.objective) best = std::move(candidate);
  }
  return best;
}

}  // namespace koopkit::numerics
