#pragma once

#include <complex>

#include <Eigen/Dense>

namespace koopkit {

using Complex = std::complex<double>;

using StateVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

// A list of states, one state per row.
using PointSet = Eigen::MatrixXd;

#ifdef KOOPKIT_VERSION
inline constexpr const char* kVersion = KOOPKIT_VERSION;
#else
inline constexpr const char* kVersion = "0.1.0";
#endif

}  // namespace koopkit
