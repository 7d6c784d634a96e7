#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "flutterspec/errors.hpp"
#include "flutterspec/operator.hpp"

namespace flutterspec {

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Rotates x by a unit phase so that <ref, x> is real and nonnegative.
inline CVector phase_aligned(const CVector& x, const CVector& ref) {
  const cdouble ip = ref.dot(x);  // conj(ref)^T x
  const double mag = std::abs(ip);
  if (mag == 0.0) return x;
  return x * (std::conj(ip) / mag);
}

/// One equation of a linear three-parameter eigenvalue problem
///   (B0 + l1 B1 + l2 B2 + l3 B3) v = 0.
struct LinearMepEquation {
  std::array<CMatrix, 4> b;
};

/// Operator determinant of the 3x3 block array coeff[i][j] (tensor order
/// V1 (x) V2 (x) V3).
inline CMatrix operator_determinant(const std::array<std::array<const CMatrix*, 3>, 3>& c) {
  static constexpr std::array<std::array<int, 3>, 6> perms{{
      {0, 1, 2}, {1, 2, 0}, {2, 0, 1}, {0, 2, 1}, {1, 0, 2}, {2, 1, 0}}};
  static constexpr std::array<double, 6> signs{1, 1, 1, -1, -1, -1};
  CMatrix out;
  for (std::size_t k = 0; k < perms.size(); ++k) {
    const auto& p = perms[k];
    CMatrix term = kron(kron(*c[0][p[0]], *c[1][p[1]]), *c[2][p[2]]);
    if (out.size() == 0) {
      out = signs[k] * term;
    } else {
      out += signs[k] * term;
    }
  }
  return out;
}

/// Eigenvalue triples of a linear three-parameter problem, computed from the
/// operator determinants Delta_0..Delta_3 and the commuting matrices
/// Gamma_j = Delta_0^{-1} Delta_j. Eigenvectors are taken from one fixed
/// combination of the Gamma_j; each parameter is then its Rayleigh quotient.
///
/// `scales` weights the parameters in the combination so that it is balanced
/// for the caller's units.
inline std::vector<std::array<cdouble, 3>> solve_linear_mep3(const std::array<LinearMepEquation, 3>& eqs,
                                                             const std::array<double, 3>& scales = {1, 1, 1}) {
  std::array<CMatrix, 3> neg0;
  for (int i = 0; i < 3; ++i) neg0[i] = -eqs[i].b[0];

  auto column_det = [&](int replaced) {
    std::array<std::array<const CMatrix*, 3>, 3> c{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) c[i][j] = (j == replaced) ? &neg0[i] : &eqs[i].b[j + 1];
    }
    return operator_determinant(c);
  };

  const CMatrix delta0 = column_det(-1);
  Eigen::PartialPivLU<CMatrix> lu(delta0);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) throw NumericalError("operator determinant Delta_0 is numerically singular");

  std::array<CMatrix, 3> gamma;
  for (int j = 0; j < 3; ++j) gamma[j] = lu.solve(column_det(j));

  // Fixed irrational-ish weights keep accidental multiplicities unlikely.
  const CMatrix combo = gamma[0] / scales[0] + 0.6180339887498949 * gamma[1] / scales[1] +
                        0.4142135623730950 * gamma[2] / scales[2];
  Eigen::ComplexEigenSolver<CMatrix> es(combo, true);
  if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition of Delta pencil failed");

  std::vector<std::array<cdouble, 3>> out;
  out.reserve(static_cast<std::size_t>(combo.rows()));
  for (Eigen::Index k = 0; k < combo.rows(); ++k) {
    const CVector z = es.eigenvectors().col(k);
    const double zz = z.squaredNorm();
    std::array<cdouble, 3> lam{};
    for (int j = 0; j < 3; ++j) lam[j] = z.dot(gamma[j] * z) / zz;
    out.push_back(lam);
  }
  return out;
}

}  // namespace flutterspec
