#pragma once
// Small operators shared by the unit tests.

#include <random>

#include "flutterspec.hpp"

namespace fixtures {

using namespace flutterspec;

inline ParametricOperator identity(int n = 2, ParameterWindow w = {0.0, 1.0, 0.0, 4.0}) {
  return ParametricOperator(
      "identity", n, [n](cdouble, double) { return CMatrix::Identity(n, n); }, w);
}

/// diag(1, 3) - chi I, no airspeed dependence.
inline ParametricOperator shifted(ParameterWindow w = {0.0, 1.0, 0.0, 4.0}) {
  return ParametricOperator(
      "shifted", 2,
      [](cdouble chi, double) {
        CMatrix a = CMatrix::Zero(2, 2);
        a(0, 0) = 1.0 - chi;
        a(1, 1) = 3.0 - chi;
        return a;
      },
      w);
}

inline ParametricOperator reference_trajectory() { return build_trajectory_operator(reference_restabilization_spec()); }

/// Rotation mixing of the reference trajectory spec.
inline ParametricOperator rotated_trajectory(double angle = 0.7) {
  TrajectorySpec s = reference_restabilization_spec();
  Eigen::MatrixXd T(2, 2);
  T << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  s.mixing = T;
  return build_trajectory_operator(s);
}

inline double relerr(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double frob_relerr(const CMatrix& a, const CMatrix& b) {
  const double nb = b.norm();
  return (a - b).norm() / (nb > 0.0 ? nb : 1.0);
}

}  // namespace fixtures
