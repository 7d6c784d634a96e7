#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flutterspec/errors.hpp"
#include "flutterspec/operator.hpp"

namespace flutterspec {

/// Real polynomial in U with ascending coefficients c0 + c1 U + c2 U^2 + ...
struct Polynomial {
  std::vector<double> coeffs;

  double operator()(double u) const noexcept {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * u + *it;
    return acc;
  }
  Polynomial derivative() const {
    Polynomial d;
    for (std::size_t k = 1; k < coeffs.size(); ++k) d.coeffs.push_back(static_cast<double>(k) * coeffs[k]);
    return d;
  }
};

// ---------------------------------------------------------------------------
// Closed-form trajectory operator.

struct TrajectoryMode {
  Polynomial omega;  // rad/s
  Polynomial g;      // rad/s, positive = damped
};

struct TrajectorySpec {
  std::vector<TrajectoryMode> modes;
  std::optional<Eigen::MatrixXd> mixing;
  ParameterWindow window{0.0, 800.0, 0.0, 200.0};
};

/// omega_1 = 60 - 0.05 U, g_1 = -1e-7 (U - 120)((U - 600)^2 + 2000), plus a
/// stable companion mode at 150 + 5i. Single flutter crossing at U = 120 and a
/// shallow supercritical hump where g_1 nearly returns to zero near U = 598.
inline TrajectorySpec reference_restabilization_spec() {
  // (U - 120)(U^2 - 1200 U + 362000) = U^3 - 1320 U^2 + 506000 U - 43440000
  TrajectorySpec s;
  s.modes.push_back({Polynomial{{60.0, -0.05}}, Polynomial{{4.344, -0.0506, 1.32e-4, -1e-7}}});
  s.modes.push_back({Polynomial{{150.0}}, Polynomial{{5.0}}});
  return s;
}

inline ParametricOperator build_trajectory_operator(const TrajectorySpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.modes.size());
  if (n < 1) throw InvalidArgument("trajectory: at least one mode is required");
  for (const auto& m : spec.modes) {
    if (m.omega.coeffs.empty() || m.g.coeffs.empty()) {
      throw InvalidArgument("trajectory: omega and g need at least one coefficient");
    }
  }

  CMatrix t = CMatrix::Identity(n, n);
  CMatrix t_inv = CMatrix::Identity(n, n);
  if (spec.mixing) {
    const Eigen::MatrixXd& tm = *spec.mixing;
    if (tm.rows() != n || tm.cols() != n) throw InvalidArgument("trajectory: mixing matrix has wrong size");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(tm);
    const auto& s = svd.singularValues();
    const double cond = s(n - 1) > 0.0 ? s(0) / s(n - 1) : INFINITY;
    if (!(cond <= 100.0)) throw InvalidArgument("trajectory: mixing matrix is ill-conditioned (cond > 100)");
    t = tm.cast<cdouble>();
    t_inv = tm.inverse().cast<cdouble>();
  }

  std::vector<TrajectoryMode> modes = spec.modes;
  std::vector<TrajectoryMode> dmodes;
  for (const auto& m : modes) dmodes.push_back({m.omega.derivative(), m.g.derivative()});

  auto eval = [modes, t, t_inv, n](cdouble chi, double U) {
    CVector diag(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& m = modes[static_cast<std::size_t>(k)];
      diag(k) = chi - cdouble(m.omega(U), m.g(U));
    }
    return CMatrix(t * diag.asDiagonal() * t_inv);
  };
  auto derivs = [dmodes, t, t_inv, n](cdouble, double U) {
    CVector diag(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& m = dmodes[static_cast<std::size_t>(k)];
      diag(k) = -cdouble(m.omega(U), m.g(U));
    }
    OperatorDerivatives d;
    d.d_chi_r = CMatrix::Identity(n, n);
    d.d_chi_i = kI * CMatrix::Identity(n, n);
    d.d_u = t * diag.asDiagonal() * t_inv;
    return d;
  };
  return ParametricOperator("trajectory", n, std::move(eval), spec.window, std::move(derivs));
}

// ---------------------------------------------------------------------------
// Two-DOF typical section with quasi-steady aerodynamics.

struct TypicalSectionSpec {
  double m = 2.0;      // kg/m
  double S = 0.3;      // kg
  double I_a = 0.4;    // kg m
  double k_h = 200.0;  // N/m^2
  double k_a = 400.0;  // N
  double rho = 1.225;  // kg/m^3
  double b = 0.25;     // m
  double e = 0.08;     // m
  double C_La = 2.0 * std::numbers::pi;
  ParameterWindow window{2.0, 30.0, 20.0, 40.0};
};

struct QuadraticPencil {
  Eigen::MatrixXd M, K, D, E;  // A = -chi^2 M + i chi U D + K + U^2 E
};

inline QuadraticPencil typical_section_matrices(const TypicalSectionSpec& s) {
  const double q = s.rho * s.b * s.C_La;
  QuadraticPencil p;
  p.M.resize(2, 2);
  p.M << s.m, s.S, s.S, s.I_a;
  p.K = Eigen::Vector2d(s.k_h, s.k_a).asDiagonal();
  p.D.resize(2, 2);
  p.D << q, 0.0, -s.e * q, 0.0;
  p.E.resize(2, 2);
  p.E << 0.0, q, 0.0, -s.e * q;
  return p;
}

namespace detail {

inline ParametricOperator pencil_operator(std::string name, const QuadraticPencil& p, double scale,
                                          const ParameterWindow& window) {
  const CMatrix M = p.M.cast<cdouble>() * scale;
  const CMatrix K = p.K.cast<cdouble>() * scale;
  const CMatrix D = p.D.cast<cdouble>() * scale;
  const CMatrix E = p.E.cast<cdouble>() * scale;
  const auto n = M.rows();
  auto eval = [M, K, D, E](cdouble chi, double U) {
    return CMatrix(-chi * chi * M + kI * chi * U * D + K + U * U * E);
  };
  auto derivs = [M, D, E](cdouble chi, double U) {
    OperatorDerivatives d;
    d.d_chi_r = -2.0 * chi * M + kI * U * D;
    d.d_chi_i = kI * d.d_chi_r;
    d.d_u = kI * chi * D + 2.0 * U * E;
    return d;
  };
  return ParametricOperator(std::move(name), n, std::move(eval), window, std::move(derivs));
}

}  // namespace detail

inline void validate(const TypicalSectionSpec& s) {
  for (double v : {s.m, s.I_a, s.k_h, s.k_a, s.rho, s.b, s.C_La}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("typical_section: physical constants must be positive");
  }
  if (!std::isfinite(s.S) || !std::isfinite(s.e)) throw InvalidArgument("typical_section: non-finite S or e");
  if (!(s.m * s.I_a - s.S * s.S > 0.0)) throw InvalidArgument("typical_section: mass matrix is not positive definite");
}

inline ParametricOperator build_typical_section(const TypicalSectionSpec& spec) {
  validate(spec);
  return detail::pencil_operator("typical_section", typical_section_matrices(spec), 1.0, spec.window);
}

// ---------------------------------------------------------------------------
// Normal operator diag(lambda_k) - chi I, independent of U.

inline ParametricOperator build_normal_operator(const std::vector<cdouble>& eigenvalues,
                                                std::optional<ParameterWindow> window = std::nullopt) {
  if (eigenvalues.empty()) throw InvalidArgument("normal: eigenvalue list is empty");
  const auto n = static_cast<Eigen::Index>(eigenvalues.size());
  CVector lam(n);
  for (Eigen::Index k = 0; k < n; ++k) lam(k) = eigenvalues[static_cast<std::size_t>(k)];
  if (!window) {
    const double lo = lam.real().minCoeff();
    const double hi = lam.real().maxCoeff();
    window = ParameterWindow{0.0, 1.0, lo - 1.0, hi + 1.0};
  }
  auto eval = [lam](cdouble chi, double) {
    return CMatrix((lam.array() - chi).matrix().asDiagonal());
  };
  auto derivs = [n](cdouble, double) {
    OperatorDerivatives d;
    d.d_chi_r = -CMatrix::Identity(n, n);
    d.d_chi_i = -kI * CMatrix::Identity(n, n);
    d.d_u = CMatrix::Zero(n, n);
    return d;
  };
  return ParametricOperator("normal", n, std::move(eval), *window, std::move(derivs));
}

// ---------------------------------------------------------------------------
// Cantilevered beam wing, assumed-mode Galerkin with strip-theory aero.

struct GalerkinWingSpec {
  double EI = 9.77e6;     // N m^2
  double GJ = 0.987e6;    // N m^2
  double m = 35.71;       // kg/m
  double I_a = 8.64;      // kg m
  double span = 6.096;    // m
  double x_theta = 0.18288;  // m, centre of mass aft of elastic axis
  double e = 0.146;       // m, aerodynamic centre ahead of elastic axis
  int n_bending = 2;
  int n_torsion = 2;
  double rho = 1.225;
  double b = 0.9144;      // semichord, m
  double C_La = 2.0 * std::numbers::pi;
  ParameterWindow window{20.0, 150.0, 30.0, 150.0};
};

/// Roots of cos(x) cosh(x) = -1, the clamped-free beam eigenvalues beta_i L.
inline std::vector<double> cantilever_roots(int count) {
  std::vector<double> roots;
  for (int i = 0; i < count; ++i) {
    const double guess = (2.0 * i + 1.0) * std::numbers::pi / 2.0;
    double lo = guess - 1.0;
    double hi = guess + 1.0;
    // cos x cosh x + 1 overflows for large x; divide through by cosh.
    auto f = [](double x) { return std::cos(x) + 1.0 / std::cosh(x); };
    double flo = f(lo);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = f(mid);
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    roots.push_back(0.5 * (lo + hi));
  }
  return roots;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/// Clamped-free bending mode shape and its second derivative divided by
/// beta^2, written to avoid cancellation between cosh and sinh terms.
inline std::pair<double, double> cantilever_shape(double beta_l, double y_over_l) {
  const double Z = beta_l;
  const double z = beta_l * y_over_l;
  const double denom = std::sinh(Z) + std::sin(Z);
  const double sigma = (std::cosh(Z) + std::cos(Z)) / denom;
  // (1 - sigma) e^z, (1 + sigma) e^-z
  const double ez_over = 2.0 * std::exp(z - Z) / (1.0 - std::exp(-2.0 * Z) + 2.0 * std::sin(Z) * std::exp(-Z));
  const double one_minus = (-std::exp(-Z) + std::sin(Z) - std::cos(Z)) * ez_over;
  const double hyper = 0.5 * (one_minus + (1.0 + sigma) * std::exp(-z));  // cosh z - sigma sinh z
  const double phi = hyper - std::cos(z) + sigma * std::sin(z);
  const double phi2 = hyper + std::cos(z) - sigma * std::sin(z);
  return {phi, phi2};
}

inline void validate(const GalerkinWingSpec& s) {
  for (double v : {s.EI, s.GJ, s.m, s.I_a, s.span, s.b, s.C_La}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("galerkin_wing: physical constants must be positive");
  }
  if (!(s.rho >= 0.0) || !std::isfinite(s.rho)) throw InvalidArgument("galerkin_wing: rho must be >= 0");
  if (!std::isfinite(s.x_theta) || !std::isfinite(s.e)) throw InvalidArgument("galerkin_wing: non-finite offsets");
  if (s.n_bending < 1 || s.n_torsion < 1) throw InvalidArgument("galerkin_wing: mode counts must be >= 1");
  if (s.m * s.I_a - s.m * s.m * s.x_theta * s.x_theta <= 0.0) {
    throw InvalidArgument("galerkin_wing: section mass matrix is not positive definite");
  }
}

/// Dimensional pencil matrices of the Galerkin wing (before normalization).
inline QuadraticPencil galerkin_wing_matrices(const GalerkinWingSpec& s) {
  validate(s);
  const int nb = s.n_bending, nt = s.n_torsion, n = nb + nt;
  const double L = s.span;
  const auto roots = cantilever_roots(nb);

  // Composite Gauss-Legendre: 32 panels of 16 points.
  const auto [gx, gw] = gauss_legendre(16);
  const int panels = 32;
  std::vector<double> ys, ws;
  for (int p = 0; p < panels; ++p) {
    const double a = L * p / panels, h = L / panels;
    for (std::size_t k = 0; k < gx.size(); ++k) {
      ys.push_back(a + 0.5 * h * (gx[k] + 1.0));
      ws.push_back(0.5 * h * gw[k]);
    }
  }
  const std::size_t nq = ys.size();
  Eigen::MatrixXd phi(nb, nq), phi2(nb, nq), th(nt, nq), th1(nt, nq);
  for (int i = 0; i < nb; ++i) {
    const double beta = roots[static_cast<std::size_t>(i)] / L;
    for (std::size_t q = 0; q < nq; ++q) {
      const auto [f, f2] = cantilever_shape(roots[static_cast<std::size_t>(i)], ys[q] / L);
      phi(i, static_cast<Eigen::Index>(q)) = f;
      phi2(i, static_cast<Eigen::Index>(q)) = beta * beta * f2;
    }
  }
  for (int j = 0; j < nt; ++j) {
    const double gam = (2.0 * j + 1.0) * std::numbers::pi / (2.0 * L);
    for (std::size_t q = 0; q < nq; ++q) {
      th(j, static_cast<Eigen::Index>(q)) = std::sin(gam * ys[q]);
      th1(j, static_cast<Eigen::Index>(q)) = gam * std::cos(gam * ys[q]);
    }
  }
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(nq));
  auto gram = [&w](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return Eigen::MatrixXd(a * w.asDiagonal() * b.transpose());
  };
  const Eigen::MatrixXd Pbb = gram(phi, phi), Pbt = gram(phi, th), Ptt = gram(th, th);
  const double q = s.rho * s.b * s.C_La;

  QuadraticPencil p;
  p.M = Eigen::MatrixXd::Zero(n, n);
  p.K = Eigen::MatrixXd::Zero(n, n);
  p.D = Eigen::MatrixXd::Zero(n, n);
  p.E = Eigen::MatrixXd::Zero(n, n);
  p.M.topLeftCorner(nb, nb) = s.m * Pbb;
  p.M.topRightCorner(nb, nt) = s.m * s.x_theta * Pbt;
  p.M.bottomLeftCorner(nt, nb) = s.m * s.x_theta * Pbt.transpose();
  p.M.bottomRightCorner(nt, nt) = s.I_a * Ptt;
  p.K.topLeftCorner(nb, nb) = s.EI * gram(phi2, phi2);
  p.K.bottomRightCorner(nt, nt) = s.GJ * gram(th1, th1);
  p.D.topLeftCorner(nb, nb) = q * Pbb;
  p.D.bottomLeftCorner(nt, nb) = -s.e * q * Pbt.transpose();
  p.E.topRightCorner(nb, nt) = q * Pbt;
  p.E.bottomRightCorner(nt, nt) = -s.e * q * Ptt;
  return p;
}

/// A is divided by the first bending stiffness so entries stay O(1) and
/// absolute residual tolerances are meaningful.
inline ParametricOperator build_galerkin_wing(const GalerkinWingSpec& spec) {
  const QuadraticPencil p = galerkin_wing_matrices(spec);
  return detail::pencil_operator("galerkin_wing", p, 1.0 / p.K(0, 0), spec.window);
}

/// Closed-form uncoupled natural frequencies (bending then torsion), rad/s.
inline std::vector<double> cantilever_natural_frequencies(const GalerkinWingSpec& s) {
  std::vector<double> out;
  for (double r : cantilever_roots(s.n_bending)) {
    const double beta = r / s.span;
    out.push_back(beta * beta * std::sqrt(s.EI / s.m));
  }
  for (int j = 0; j < s.n_torsion; ++j) {
    const double gam = (2.0 * j + 1.0) * std::numbers::pi / (2.0 * s.span);
    out.push_back(gam * std::sqrt(s.GJ / s.I_a));
  }
  return out;
}

}  // namespace flutterspec
