#pragma once

// Numerical algorithms as discrete dynamical systems, and the potentials
// they run on.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "koopkit/errors.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/numerics.hpp"
#include "koopkit/parallel.hpp"
#include "koopkit/random.hpp"
#include "koopkit/types.hpp"

namespace koopkit::systems {

// ---------------------------------------------------------------------------
// Potentials

class Potential {
 public:
  virtual ~Potential() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual double value(const StateVector& x) const = 0;
  virtual StateVector gradient(const StateVector& x) const = 0;
  virtual RealMatrix hessian(const StateVector& x) const = 0;
};

using PotentialPtr = std::shared_ptr<const Potential>;

inline void require_dim(const StateVector& x, Eigen::Index dim, const char* who) {
  if (x.size() != dim)
    throw InvalidInput(std::string(who) + ": expected dimension " + std::to_string(dim) +
                       ", got " + std::to_string(x.size()));
}

inline StateVector potential_gradient(const Potential& p, const StateVector& x) {
  require_dim(x, p.dim(), "potential_gradient");
  return p.gradient(x);
}

inline double potential_value(const Potential& p, const StateVector& x) {
  require_dim(x, p.dim(), "potential_value");
  return p.value(x);
}

/// f(x) = x^T Q x / 2 for symmetric Q.
class QuadraticPotential final : public Potential {
 public:
  explicit QuadraticPotential(RealMatrix q) : q_(std::move(q)) {
    if (q_.rows() == 0 || q_.rows() != q_.cols()) throw InvalidInput("QuadraticPotential: Q must be square");
    if (!q_.isApprox(q_.transpose(), 1e-14)) throw InvalidInput("QuadraticPotential: Q must be symmetric");
  }
  std::string name() const override { return "quadratic"; }
  int dim() const override { return static_cast<int>(q_.rows()); }
  double value(const StateVector& x) const override { return 0.5 * x.dot(q_ * x); }
  StateVector gradient(const StateVector& x) const override { return q_ * x; }
  RealMatrix hessian(const StateVector&) const override { return q_; }
  const RealMatrix& matrix() const { return q_; }

 private:
  RealMatrix q_;
};

/// (x1^2 + x2 - 11)^2 + (x1 + x2^2 - 7)^2
class Himmelblau final : public Potential {
 public:
  std::string name() const override { return "himmelblau"; }
  int dim() const override { return 2; }
  double value(const StateVector& p) const override {
    const double a = p(0) * p(0) + p(1) - 11.0, b = p(0) + p(1) * p(1) - 7.0;
    return a * a + b * b;
  }
  StateVector gradient(const StateVector& p) const override {
    const double x = p(0), y = p(1);
    const double a = x * x + y - 11.0, b = x + y * y - 7.0;
    return StateVector{{4.0 * x * a + 2.0 * b, 2.0 * a + 4.0 * y * b}};
  }
  RealMatrix hessian(const StateVector& p) const override {
    const double x = p(0), y = p(1);
    RealMatrix h(2, 2);
    h << 12.0 * x * x + 4.0 * y - 42.0, 4.0 * (x + y), 4.0 * (x + y), 4.0 * x + 12.0 * y * y - 26.0;
    return h;
  }
};

/// Double well x1^4 - x1^2 + x1/4 + x2^2. Minima near x1 = -0.763 and 0.634,
/// saddle near x1 = 0.129.
class Quartic final : public Potential {
 public:
  std::string name() const override { return "quartic"; }
  int dim() const override { return 2; }
  double value(const StateVector& p) const override {
    const double x = p(0);
    return x * x * x * x - x * x + 0.25 * x + p(1) * p(1);
  }
  StateVector gradient(const StateVector& p) const override {
    const double x = p(0);
    return StateVector{{4.0 * x * x * x - 2.0 * x + 0.25, 2.0 * p(1)}};
  }
  RealMatrix hessian(const StateVector& p) const override {
    RealMatrix h = RealMatrix::Zero(2, 2);
    h(0, 0) = 12.0 * p(0) * p(0) - 2.0;
    h(1, 1) = 2.0;
    return h;
  }
};

/// The classic four-term Mueller-Brown surface.
class MuellerBrown final : public Potential {
 public:
  static constexpr std::array<double, 4> A{-200.0, -100.0, -170.0, 15.0};
  static constexpr std::array<double, 4> a{-1.0, -1.0, -6.5, 0.7};
  static constexpr std::array<double, 4> b{0.0, 0.0, 11.0, 0.6};
  static constexpr std::array<double, 4> c{-10.0, -10.0, -6.5, 0.7};
  static constexpr std::array<double, 4> x0{1.0, 0.0, -0.5, -1.0};
  static constexpr std::array<double, 4> y0{0.0, 0.5, 1.5, 1.0};

  std::string name() const override { return "mueller-brown"; }
  int dim() const override { return 2; }

  double value(const StateVector& p) const override { return value2(p(0), p(1)); }
  StateVector gradient(const StateVector& p) const override {
    const auto g = gradient2(p(0), p(1));
    return StateVector{{g[0], g[1]}};
  }
  RealMatrix hessian(const StateVector& p) const override { return hessian2(p(0), p(1)); }

  static double value2(double x, double y) {
    double v = 0.0;
    for (int k = 0; k < 4; ++k) v += A[k] * std::exp(exponent(k, x, y));
    return v;
  }
  static std::array<double, 2> gradient2(double x, double y) {
    std::array<double, 2> g{0.0, 0.0};
    for (int k = 0; k < 4; ++k) {
      const double dx = x - x0[k], dy = y - y0[k];
      const double e = A[k] * std::exp(exponent(k, x, y));
      g[0] += e * (2.0 * a[k] * dx + b[k] * dy);
      g[1] += e * (b[k] * dx + 2.0 * c[k] * dy);
    }
    return g;
  }
  static RealMatrix hessian2(double x, double y) {
    RealMatrix h = RealMatrix::Zero(2, 2);
    for (int k = 0; k < 4; ++k) {
      const double dx = x - x0[k], dy = y - y0[k];
      const double e = A[k] * std::exp(exponent(k, x, y));
      const double gx = 2.0 * a[k] * dx + b[k] * dy, gy = b[k] * dx + 2.0 * c[k] * dy;
      h(0, 0) += e * (gx * gx + 2.0 * a[k]);
      h(0, 1) += e * (gx * gy + b[k]);
      h(1, 1) += e * (gy * gy + 2.0 * c[k]);
    }
    h(1, 0) = h(0, 1);
    return h;
  }

 private:
  static double exponent(int k, double x, double y) {
    const double dx = x - x0[k], dy = y - y0[k];
    return a[k] * dx * dx + b[k] * dx * dy + c[k] * dy * dy;
  }
};

// Seeded orthogonal matrix: Q factor of a standard Gaussian matrix, with
// column signs fixed so that R has a positive diagonal.
inline RealMatrix random_orthogonal(int dim, std::uint64_t seed) {
  if (dim < 1) throw InvalidInput("random_orthogonal: dim must be positive");
  std::mt19937_64 rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealMatrix g(dim, dim);
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<RealMatrix> qr(g);
  RealMatrix q = qr.householderQ() * RealMatrix::Identity(dim, dim);
  const RealMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

/// C(x) = V(u_1, u_2) + sum_{i>=3} u_i^2 with u = U x: the Mueller-Brown
/// surface on two rotated directions and a quadratic well on the rest.
class EmbeddedMuellerBrown final : public Potential {
 public:
  EmbeddedMuellerBrown(int dim, std::uint64_t seed) : u_(random_orthogonal(dim, seed)), seed_(seed) {
    if (dim < 2) throw InvalidInput("EmbeddedMuellerBrown: dim must be at least 2");
  }
  explicit EmbeddedMuellerBrown(RealMatrix u) : u_(std::move(u)) {
    if (u_.rows() < 2 || u_.rows() != u_.cols())
      throw InvalidInput("EmbeddedMuellerBrown: U must be square with dim >= 2");
  }

  std::string name() const override { return "mueller-brown-embedded"; }
  int dim() const override { return static_cast<int>(u_.rows()); }
  const RealMatrix& rotation() const { return u_; }
  std::uint64_t seed() const { return seed_; }

  double value(const StateVector& x) const override {
    const StateVector u = u_ * x;
    return MuellerBrown::value2(u(0), u(1)) + u.tail(u.size() - 2).squaredNorm();
  }
  StateVector gradient(const StateVector& x) const override {
    const StateVector u = u_ * x;
    StateVector g = 2.0 * u;
    const auto g2 = MuellerBrown::gradient2(u(0), u(1));
    g(0) = g2[0];
    g(1) = g2[1];
    return u_.transpose() * g;
  }
  RealMatrix hessian(const StateVector& x) const override {
    const StateVector u = u_ * x;
    RealMatrix h = 2.0 * RealMatrix::Identity(dim(), dim());
    h.topLeftCorner(2, 2) = MuellerBrown::hessian2(u(0), u(1));
    return u_.transpose() * h * u_;
  }

 private:
  RealMatrix u_;
  std::uint64_t seed_ = 0;
};

// ---------------------------------------------------------------------------
// Complex polynomials (coefficients in ascending order)

class ComplexPolynomial {
 public:
  explicit ComplexPolynomial(std::vector<Complex> ascending) : c_(std::move(ascending)) {
    while (c_.size() > 1 && c_.back() == Complex(0.0)) c_.pop_back();
    if (c_.empty()) c_.push_back(0.0);
  }

  // Monic polynomial with the given roots.
  static ComplexPolynomial from_roots(const std::vector<Complex>& roots) {
    std::vector<Complex> c{1.0};
    for (const Complex& r : roots) {
      std::vector<Complex> next(c.size() + 1, 0.0);
      for (std::size_t i = 0; i < c.size(); ++i) {
        next[i + 1] += c[i];
        next[i] -= r * c[i];
      }
      c = std::move(next);
    }
    return ComplexPolynomial(std::move(c));
  }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  const std::vector<Complex>& coefficients() const { return c_; }

  Complex operator()(Complex z) const {
    Complex v = 0.0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) v = v * z + *it;
    return v;
  }

  ComplexPolynomial derivative() const {
    if (c_.size() == 1) return ComplexPolynomial({0.0});
    std::vector<Complex> d(c_.size() - 1);
    for (std::size_t i = 1; i < c_.size(); ++i) d[i - 1] = c_[i] * static_cast<double>(i);
    return ComplexPolynomial(std::move(d));
  }

  // Roots as eigenvalues of the companion matrix.
  std::vector<Complex> roots() const {
    const int n = degree();
    if (n < 1) return {};
    ComplexMatrix comp = ComplexMatrix::Zero(n, n);
    for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) comp(i, n - 1) = -c_[static_cast<std::size_t>(i)] / c_.back();
    Eigen::ComplexEigenSolver<ComplexMatrix> solver(comp, false);
    if (solver.info() != Eigen::Success) throw NumericalError("polynomial roots: eigensolver failed");
    std::vector<Complex> r(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    std::sort(r.begin(), r.end(), [](Complex p, Complex q) {
      if (p.real() != q.real()) return p.real() < q.real();
      return p.imag() < q.imag();
    });
    return r;
  }

 private:
  std::vector<Complex> c_;
};

// ---------------------------------------------------------------------------
// Discrete systems

class DiscreteSystem {
 public:
  virtual ~DiscreteSystem() = default;
  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual double step_size() const = 0;
  // Unchecked single iteration; use the free function `step`.
  virtual StateVector advance(const StateVector& x) const = 0;
};

using SystemPtr = std::shared_ptr<const DiscreteSystem>;

/// One iteration of the scheme. Throws SingularityError (carrying x) when a
/// Jacobian, Hessian or derivative cannot be inverted.
inline StateVector step(const DiscreteSystem& system, const StateVector& x) {
  require_dim(x, system.state_dim(), "step");
  return system.advance(x);
}

inline PointSet trajectory(const DiscreteSystem& system, const StateVector& x0, int n) {
  if (n < 0) throw InvalidInput("trajectory: n must be nonnegative");
  require_dim(x0, system.state_dim(), "trajectory");
  PointSet out(n + 1, x0.size());
  StateVector x = x0;
  out.row(0) = x.transpose();
  for (int i = 1; i <= n; ++i) {
    x = system.advance(x);
    out.row(i) = x.transpose();
  }
  return out;
}

namespace detail {

inline StateVector solve_or_throw(const RealMatrix& m, const StateVector& rhs, const StateVector& at,
                                  const char* what) {
  Eigen::FullPivLU<RealMatrix> lu(m);
  if (!lu.isInvertible() || lu.rcond() < 1e-14)
    throw SingularityError(std::string(what) + " is singular", at);
  return lu.solve(rhs);
}

}  // namespace detail

/// x -> x - h grad f(x)
class GradientDescent final : public DiscreteSystem {
 public:
  GradientDescent(PotentialPtr f, double h) : f_(std::move(f)), h_(h) {
    if (!f_) throw InvalidInput("GradientDescent: null potential");
    if (!(h_ > 0.0)) throw InvalidInput("GradientDescent: step size must be positive");
  }
  std::string name() const override { return "gradient-descent/" + f_->name(); }
  int state_dim() const override { return f_->dim(); }
  double step_size() const override { return h_; }
  StateVector advance(const StateVector& x) const override { return x - h_ * f_->gradient(x); }
  const Potential& potential() const { return *f_; }

 private:
  PotentialPtr f_;
  double h_;
};

/// x -> x - H(x)^{-1} grad f(x)
class NewtonOptimization final : public DiscreteSystem {
 public:
  explicit NewtonOptimization(PotentialPtr f) : f_(std::move(f)) {
    if (!f_) throw InvalidInput("NewtonOptimization: null potential");
  }
  std::string name() const override { return "newton-optimization/" + f_->name(); }
  int state_dim() const override { return f_->dim(); }
  double step_size() const override { return 1.0; }
  StateVector advance(const StateVector& x) const override {
    return x - detail::solve_or_throw(f_->hessian(x), f_->gradient(x), x, "Hessian");
  }

 private:
  PotentialPtr f_;
};

/// x -> x - J(x)^{-1} F(x) for F: R^d -> R^d.
class NewtonRootFinding final : public DiscreteSystem {
 public:
  using Residual = std::function<StateVector(const StateVector&)>;
  using Jacobian = std::function<RealMatrix(const StateVector&)>;

  NewtonRootFinding(int dim, Residual f, Jacobian j, std::string label = "newton-root")
      : dim_(dim), f_(std::move(f)), j_(std::move(j)), label_(std::move(label)) {
    if (dim_ < 1) throw InvalidInput("NewtonRootFinding: dim must be positive");
  }
  std::string name() const override { return label_; }
  int state_dim() const override { return dim_; }
  double step_size() const override { return 1.0; }
  StateVector advance(const StateVector& x) const override {
    return x - detail::solve_or_throw(j_(x), f_(x), x, "Jacobian");
  }

 private:
  int dim_;
  Residual f_;
  Jacobian j_;
  std::string label_;
};

/// Newton's method z -> z - p(z)/p'(z) on a complex polynomial; the state is
/// (Re z, Im z).
class ComplexNewton final : public DiscreteSystem {
 public:
  explicit ComplexNewton(ComplexPolynomial p) : p_(std::move(p)), dp_(p_.derivative()) {
    if (p_.degree() < 1) throw InvalidInput("ComplexNewton: polynomial must be nonconstant");
  }
  std::string name() const override { return "newton-complex"; }
  int state_dim() const override { return 2; }
  double step_size() const override { return 1.0; }
  StateVector advance(const StateVector& x) const override {
    const Complex z = map(Complex(x(0), x(1)), x);
    return StateVector{{z.real(), z.imag()}};
  }
  Complex map(Complex z) const { return map(z, StateVector{{z.real(), z.imag()}}); }
  const ComplexPolynomial& polynomial() const { return p_; }

 private:
  Complex map(Complex z, const StateVector& at) const {
    const Complex d = dp_(z);
    if (d == Complex(0.0)) throw SingularityError("polynomial derivative vanishes", at);
    return z - p_(z) / d;
  }
  ComplexPolynomial p_;
  ComplexPolynomial dp_;
};

/// Nesterov's accelerated gradient in the augmented state z = (x, v, t):
///   y  = x + (1 - r h / t) h v
///   x' = y - h^2 grad f(y)
///   v' = (x' - x) / h,  t' = t + h
/// With v = (x_n - x_{n-1})/h and t = (n + r) h this is the two-line
/// scheme x_{n+1} = y_n - s grad f(y_n), y_n = x_n + n/(n+r) (x_n - x_{n-1})
/// with s = h^2.
class Nesterov final : public DiscreteSystem {
 public:
  Nesterov(PotentialPtr f, double h, double r = 3.0) : f_(std::move(f)), h_(h), r_(r) {
    if (!f_) throw InvalidInput("Nesterov: null potential");
    if (!(h_ > 0.0)) throw InvalidInput("Nesterov: step size must be positive");
  }
  std::string name() const override { return "nesterov/" + f_->name(); }
  int state_dim() const override { return 2 * f_->dim() + 1; }
  double step_size() const override { return h_; }
  double friction() const { return r_; }
  double gradient_step() const { return h_ * h_; }
  int potential_dim() const { return f_->dim(); }
  const Potential& potential() const { return *f_; }

  StateVector advance(const StateVector& z) const override {
    const int d = f_->dim();
    const double t = z(2 * d);
    if (!(t > 0.0)) throw SingularityError("Nesterov: momentum undefined for t <= 0", z);
    const StateVector x = z.head(d), v = z.segment(d, d);
    const StateVector y = x + (1.0 - r_ * h_ / t) * h_ * v;
    const StateVector xn = y - gradient_step() * f_->gradient(y);
    StateVector out(2 * d + 1);
    out.head(d) = xn;
    out.segment(d, d) = (xn - x) / h_;
    out(2 * d) = t + h_;
    return out;
  }

  // Augmented state for iterate n of the two-line scheme.
  StateVector augment(const StateVector& x_n, const StateVector& x_prev, int n) const {
    StateVector z(2 * f_->dim() + 1);
    z.head(f_->dim()) = x_n;
    z.segment(f_->dim(), f_->dim()) = (x_n - x_prev) / h_;
    z(2 * f_->dim()) = (n + r_) * h_;
    return z;
  }

  // Continuous-time limit: x' = v, v' = -(r/t) v - grad f(x), t' = 1.
  StateVector ode_field(const StateVector& z) const {
    const int d = f_->dim();
    StateVector out(2 * d + 1);
    out.head(d) = z.segment(d, d);
    out.segment(d, d) = -(r_ / z(2 * d)) * z.segment(d, d) - f_->gradient(z.head(d));
    out(2 * d) = 1.0;
    return out;
  }

 private:
  PotentialPtr f_;
  double h_;
  double r_;
};

/// Forward Euler on x' = -a x: x -> (1 - a dt) x, componentwise.
class ForwardEuler final : public DiscreteSystem {
 public:
  ForwardEuler(double a, double dt, int dim = 1) : a_(a), dt_(dt), dim_(dim) {
    if (!(dt_ > 0.0)) throw InvalidInput("ForwardEuler: dt must be positive");
    if (dim_ < 1) throw InvalidInput("ForwardEuler: dim must be positive");
  }
  std::string name() const override { return "forward-euler"; }
  int state_dim() const override { return dim_; }
  double step_size() const override { return dt_; }
  double rate() const { return a_; }
  StateVector advance(const StateVector& x) const override { return (1.0 - a_ * dt_) * x; }

 private:
  double a_, dt_;
  int dim_;
};

/// x -> M x
class LinearMap final : public DiscreteSystem {
 public:
  explicit LinearMap(RealMatrix m, double dt = 1.0) : m_(std::move(m)), dt_(dt) {
    if (m_.rows() == 0 || m_.rows() != m_.cols()) throw InvalidInput("LinearMap: matrix must be square");
    if (!(dt_ > 0.0)) throw InvalidInput("LinearMap: dt must be positive");
  }
  std::string name() const override { return "linear-map"; }
  int state_dim() const override { return static_cast<int>(m_.rows()); }
  double step_size() const override { return dt_; }
  StateVector advance(const StateVector& x) const override { return m_ * x; }
  const RealMatrix& matrix() const { return m_; }

 private:
  RealMatrix m_;
  double dt_;
};

// ---------------------------------------------------------------------------
// Sampling

struct UniformBox {
  StateVector lower;
  StateVector upper;
};

struct IsotropicGaussian {
  StateVector mean;
  double stddev = 1.0;
};

using Sampler = std::variant<UniformBox, IsotropicGaussian>;

inline Eigen::Index sampler_dim(const Sampler& s) {
  return std::visit(
      [](const auto& v) -> Eigen::Index {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          if (v.lower.size() != v.upper.size()) throw InvalidInput("UniformBox: bound dimensions differ");
          for (Eigen::Index i = 0; i < v.lower.size(); ++i)
            if (!(v.lower(i) <= v.upper(i))) throw InvalidInput("UniformBox: lower exceeds upper");
          return v.lower.size();
        } else {
          if (!(v.stddev > 0.0)) throw InvalidInput("IsotropicGaussian: stddev must be positive");
          return v.mean.size();
        }
      },
      s);
}

inline StateVector draw(const Sampler& s, std::mt19937_64& rng) {
  return std::visit(
      [&](const auto& v) -> StateVector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          StateVector x(v.lower.size());
          for (Eigen::Index i = 0; i < x.size(); ++i) {
            std::uniform_real_distribution<double> u(v.lower(i), v.upper(i));
            x(i) = u(rng);
          }
          return x;
        } else {
          std::normal_distribution<double> n(0.0, v.stddev);
          StateVector x(v.mean.size());
          for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = v.mean(i) + n(rng);
          return x;
        }
      },
      s);
}

struct SnapshotPairSet {
  PointSet x;  // one state per row
  PointSet y;  // y.row(i) = step(x.row(i))
  double step_size = 1.0;
  std::string system;
  std::size_t dropped = 0;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }

  void validate() const {
    if (x.rows() < 1) throw InvalidInput("SnapshotPairSet: no pairs");
    if (x.rows() != y.rows() || x.cols() != y.cols())
      throw InvalidInput("SnapshotPairSet: x and y shapes differ");
  }

  SnapshotPairSet slice(Eigen::Index begin, Eigen::Index count) const {
    SnapshotPairSet s{x.middleRows(begin, count), y.middleRows(begin, count), step_size, system, 0};
    return s;
  }
};

/// Draws n initial states (stream i uses derive_seed(seed, i)), applies
/// burn_in steps to each and records (x, step(x)). States whose iteration
/// hits a singularity or leaves the finite doubles are dropped and counted.
inline SnapshotPairSet sample_pairs(const DiscreteSystem& system, const Sampler& sampler, std::size_t n,
                                    int burn_in, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample_pairs: n must be at least 1");
  if (burn_in < 0) throw InvalidInput("sample_pairs: burn_in must be nonnegative");
  const Eigen::Index d = system.state_dim();
  if (sampler_dim(sampler) != d) throw InvalidInput("sample_pairs: sampler dimension does not match system");

  PointSet xs(static_cast<Eigen::Index>(n), d), ys(static_cast<Eigen::Index>(n), d);
  std::vector<char> kept(n, 0);
  parallel_for(n, [&](std::size_t i) {
    std::mt19937_64 rng = make_rng(seed, i);
    StateVector x = draw(sampler, rng);
    try {
      for (int b = 0; b < burn_in; ++b) x = system.advance(x);
      const StateVector y = system.advance(x);
      if (!x.allFinite() || !y.allFinite()) return;
      xs.row(static_cast<Eigen::Index>(i)) = x.transpose();
      ys.row(static_cast<Eigen::Index>(i)) = y.transpose();
      kept[i] = 1;
    } catch (const SingularityError&) {
    }
  });

  SnapshotPairSet out;
  out.step_size = system.step_size();
  out.system = system.name();
  Eigen::Index count = 0;
  for (char k : kept) count += k;
  if (count == 0) throw NumericalError("sample_pairs: every pair was dropped");
  out.x.resize(count, d);
  out.y.resize(count, d);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!kept[i]) continue;
    out.x.row(r) = xs.row(static_cast<Eigen::Index>(i));
    out.y.row(r) = ys.row(static_cast<Eigen::Index>(i));
    ++r;
  }
  out.dropped = n - static_cast<std::size_t>(count);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: a metadata block (dim,step_size,system) then the pairs.

inline void write_pairs_csv(const std::filesystem::path& path, const SnapshotPairSet& pairs) {
  pairs.validate();
  if (pairs.system.find_first_of(",\n\r") != std::string::npos)
    throw InvalidInput("write_pairs_csv: system name contains a separator");
  io::ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const Eigen::Index d = pairs.dim();
  out << "dim,step_size,system\n"
      << d << ',' << io::format_double(pairs.step_size) << ',' << pairs.system << '\n';
  std::string line;
  for (Eigen::Index j = 0; j < d; ++j) line += (j ? ",x_" : "x_") + std::to_string(j + 1);
  for (Eigen::Index j = 0; j < d; ++j) line += ",y_" + std::to_string(j + 1);
  out << line << '\n';
  for (Eigen::Index i = 0; i < pairs.size(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (j) line += ',';
      line += io::format_double(pairs.x(i, j));
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      line += ',';
      line += io::format_double(pairs.y(i, j));
    }
    out << line << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline SnapshotPairSet read_pairs_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("dim,step_size,system", 0) != 0)
    throw ParseError("expected metadata header dim,step_size,system", 1);
  if (!std::getline(in, line)) throw ParseError("missing metadata row", 2);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto meta = io::split_fields(line);
  if (meta.size() != 3) throw ParseError("metadata row needs 3 fields", 2);
  const double dim_value = io::parse_double(meta[0], 2);
  SnapshotPairSet pairs;
  pairs.step_size = io::parse_double(meta[1], 2);
  pairs.system = std::string(meta[2]);
  const auto table = io::parse_csv(in, 3);
  const auto d = static_cast<Eigen::Index>(dim_value);
  if (dim_value != static_cast<double>(d) || d < 1 || table.header.size() != static_cast<std::size_t>(2 * d))
    throw ParseError("pair columns do not match dim", 3);
  const RealMatrix m = table.as_matrix();
  pairs.x = m.leftCols(d);
  pairs.y = m.rightCols(d);
  pairs.validate();
  return pairs;
}

}  // namespace koopkit::systems
