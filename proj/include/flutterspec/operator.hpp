#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "flutterspec/errors.hpp"

namespace flutterspec {

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr cdouble kI{0.0, 1.0};

/// Admissible rectangle in (U, chi_R). Gates grid construction and path
/// termination; evaluation itself is never rejected outside it.
struct ParameterWindow {
  double u_min = 0.0;
  double u_max = 1.0;
  double chi_r_min = 0.0;
  double chi_r_max = 1.0;

  bool contains(double U, double chi_R) const noexcept {
    return U >= u_min && U <= u_max && chi_R >= chi_r_min && chi_R <= chi_r_max;
  }
  double u_span() const noexcept { return u_max - u_min; }
  double chi_r_span() const noexcept { return chi_r_max - chi_r_min; }
};

/// Central-difference step rule h = max(abs_floor, rel * |value|).
struct FdStep {
  double chi_abs = 1e-6;
  double chi_rel = 1e-8;
  double u_abs = 1e-6;
  double u_rel = 1e-8;

  double chi_step(double chi_R) const noexcept { return std::max(chi_abs, chi_rel * std::abs(chi_R)); }
  double u_step(double U) const noexcept { return std::max(u_abs, u_rel * std::abs(U)); }
};

/// Partial derivatives of A with respect to the three real parameters.
struct OperatorDerivatives {
  CMatrix d_chi_r;
  CMatrix d_chi_i;
  CMatrix d_u;
};

/// A matrix-valued function A(chi, U), chi complex frequency, U airspeed.
///
/// The callables must be pure: the operator is shared across threads by the
/// field evaluators, so a copy of the operator shares the same closures.
class ParametricOperator {
 public:
  using EvalFn = std::function<CMatrix(cdouble, double)>;
  using DerivFn = std::function<OperatorDerivatives(cdouble, double)>;

  ParametricOperator(std::string name, Eigen::Index dim, EvalFn eval, ParameterWindow window,
                     DerivFn derivs = {}, FdStep fd_step = {})
      : name_(std::move(name)),
        dim_(dim),
        eval_(std::move(eval)),
        derivs_(std::move(derivs)),
        window_(window),
        fd_step_(fd_step) {
    if (dim_ < 1) throw InvalidArgument("operator dimension must be >= 1");
    if (!eval_) throw InvalidArgument("operator requires an evaluation function");
    if (!(window_.u_min < window_.u_max) || !(window_.chi_r_min < window_.chi_r_max)) {
      throw InvalidArgument("operator window must satisfy min < max on both axes");
    }
  }

  const std::string& name() const noexcept { return name_; }
  Eigen::Index dim() const noexcept { return dim_; }
  const ParameterWindow& window() const noexcept { return window_; }
  const FdStep& fd_step() const noexcept { return fd_step_; }
  bool has_analytic_derivatives() const noexcept { return static_cast<bool>(derivs_); }

  void set_window(const ParameterWindow& w) {
    if (!(w.u_min < w.u_max) || !(w.chi_r_min < w.chi_r_max)) {
      throw InvalidArgument("operator window must satisfy min < max on both axes");
    }
    window_ = w;
  }

  // Unchecked access for the free functions below.
  CMatrix raw_eval(cdouble chi, double U) const { return eval_(chi, U); }
  OperatorDerivatives raw_derivs(cdouble chi, double U) const { return derivs_(chi, U); }

 private:
  std::string name_;
  Eigen::Index dim_;
  EvalFn eval_;
  DerivFn derivs_;
  ParameterWindow window_;
  FdStep fd_step_;
};

/// A solved triple (chi_R, chi_I, U) with unit eigenvector and residual.
struct EigenPoint {
  double chi_R = 0.0;
  double chi_I = 0.0;
  double U = 0.0;
  CVector x;
  double residual = 0.0;

  cdouble chi() const noexcept { return {chi_R, chi_I}; }
};

namespace detail {

inline bool finite(cdouble z) noexcept { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

inline std::string describe_point(cdouble chi, double U) {
  std::ostringstream os;
  os.precision(17);
  os << "(chi=" << chi.real() << (chi.imag() < 0 ? "" : "+") << chi.imag() << "i, U=" << U << ")";
  return os.str();
}

}  // namespace detail

inline CMatrix evaluate(const ParametricOperator& op, cdouble chi, double U) {
  if (!detail::finite(chi) || !std::isfinite(U)) {
    throw InvalidArgument("evaluate: non-finite argument " + detail::describe_point(chi, U));
  }
  CMatrix a = op.raw_eval(chi, U);
  if (a.rows() != op.dim() || a.cols() != op.dim()) {
    throw NumericalError("evaluate: operator '" + op.name() + "' returned a matrix of wrong size");
  }
  return a;
}

inline double residual_norm(const ParametricOperator& op, cdouble chi, double U, const CVector& x) {
  if (x.size() != op.dim()) throw InvalidArgument("residual_norm: vector dimension mismatch");
  if (std::abs(x.norm() - 1.0) > 1e-12) throw InvalidArgument("residual_norm: vector is not unit-norm");
  return (evaluate(op, chi, U) * x).norm();
}

struct SingularPair {
  double sigma = 0.0;
  CVector x;
};

/// Smallest singular value of a matrix and its right singular vector.
inline SingularPair smallest_singular_pair(const CMatrix& a) {
  Eigen::JacobiSVD<CMatrix> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const Eigen::Index last = s.size() - 1;
  if (last < 0 || !std::isfinite(s(last))) {
    throw NumericalError("singular-value decomposition failed (non-finite singular values)");
  }
  CVector x = svd.matrixV().col(last);
  return {s(last), x / x.norm()};
}

inline SingularPair sigma_min(const ParametricOperator& op, cdouble chi, double U) {
  CMatrix a = evaluate(op, chi, U);
  if (!a.allFinite()) {
    throw NumericalError("sigma_min: operator '" + op.name() + "' is non-finite at " +
                         detail::describe_point(chi, U));
  }
  try {
    return smallest_singular_pair(a);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("sigma_min: ") + e.what() + " at " + detail::describe_point(chi, U));
  }
}

/// Builds an EigenPoint at the given parameters, using the minimum singular
/// vector as the eigenvector.
inline EigenPoint make_eigen_point(const ParametricOperator& op, double chi_R, double chi_I, double U) {
  auto sp = sigma_min(op, {chi_R, chi_I}, U);
  return {chi_R, chi_I, U, std::move(sp.x), sp.sigma};
}

/// Central differences of A in (chi_R, chi_I, U) using the operator's step rule.
inline OperatorDerivatives finite_difference_derivatives(const ParametricOperator& op, double chi_R,
                                                         double chi_I, double U) {
  const double hc = op.fd_step().chi_step(chi_R);
  const double hu = op.fd_step().u_step(U);
  // Effective steps after rounding; zero means the step vanished in floating point.
  const double dcr = (chi_R + hc) - (chi_R - hc);
  const double dci = (chi_I + hc) - (chi_I - hc);
  const double du = (U + hu) - (U - hu);
  if (!(dcr > 0.0) || !(dci > 0.0) || !(du > 0.0)) {
    throw NumericalError("param_derivatives: finite-difference step underflow at " +
                         detail::describe_point({chi_R, chi_I}, U));
  }
  OperatorDerivatives d;
  d.d_chi_r = (evaluate(op, {chi_R + hc, chi_I}, U) - evaluate(op, {chi_R - hc, chi_I}, U)) / dcr;
  d.d_chi_i = (evaluate(op, {chi_R, chi_I + hc}, U) - evaluate(op, {chi_R, chi_I - hc}, U)) / dci;
  d.d_u = (evaluate(op, {chi_R, chi_I}, U + hu) - evaluate(op, {chi_R, chi_I}, U - hu)) / du;
  return d;
}

inline OperatorDerivatives param_derivatives(const ParametricOperator& op, double chi_R, double chi_I,
                                             double U) {
  if (!std::isfinite(chi_R) || !std::isfinite(chi_I) || !std::isfinite(U)) {
    throw InvalidArgument("param_derivatives: non-finite argument");
  }
  if (!op.has_analytic_derivatives()) return finite_difference_derivatives(op, chi_R, chi_I, U);
  OperatorDerivatives d = op.raw_derivs({chi_R, chi_I}, U);
  const auto n = op.dim();
  for (const CMatrix* m : {&d.d_chi_r, &d.d_chi_i, &d.d_u}) {
    if (m->rows() != n || m->cols() != n) {
      throw NumericalError("param_derivatives: operator '" + op.name() + "' returned a derivative of wrong size");
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Modal damping parameterizations. Convention x(t) = x exp(i chi t), so a
// positive imaginary part of chi is a decaying (stable) mode.

enum class DampingKind { ChiI, Zeta, Xi };

struct DampingParameterization {
  DampingKind kind = DampingKind::ChiI;
};

/// Damping ratio chi_I / |chi|.
inline double modal_damping_ratio(cdouble chi) {
  const double mag = std::abs(chi);
  return mag > 0.0 ? chi.imag() / mag : 0.0;
}

inline cdouble damping_to_complex(DampingParameterization p, double chi_R, double d) {
  switch (p.kind) {
    case DampingKind::ChiI:
      return {chi_R, d};
    case DampingKind::Xi:
      return {chi_R, chi_R * d};
    case DampingKind::Zeta:
      if (!(std::abs(d) < 1.0)) throw DomainError("damping_to_complex: |zeta| must be < 1");
      if (!(chi_R > 0.0)) throw DomainError("damping_to_complex: zeta requires chi_R > 0");
      return {chi_R, chi_R * d / std::sqrt(1.0 - d * d)};
  }
  throw InvalidArgument("damping_to_complex: unknown parameterization");
}

/// Inverse of damping_to_complex: returns (chi_R, d).
inline std::pair<double, double> complex_to_damping(DampingParameterization p, cdouble chi) {
  switch (p.kind) {
    case DampingKind::ChiI:
      return {chi.real(), chi.imag()};
    case DampingKind::Xi:
      if (!(chi.real() > 0.0)) throw DomainError("complex_to_damping: xi requires Re(chi) > 0");
      return {chi.real(), chi.imag() / chi.real()};
    case DampingKind::Zeta:
      if (!(chi.real() > 0.0)) throw DomainError("complex_to_damping: zeta requires Re(chi) > 0");
      return {chi.real(), chi.imag() / std::abs(chi)};
  }
  throw InvalidArgument("complex_to_damping: unknown parameterization");
}

/// d(chi_I)/d(chi_R) along a line of constant damping value d.
inline double damping_slope(DampingParameterization p, double d) {
  switch (p.kind) {
    case DampingKind::ChiI:
      return 0.0;
    case DampingKind::Xi:
      return d;
    case DampingKind::Zeta:
      return d / std::sqrt(1.0 - d * d);
  }
  return 0.0;
}

}  // namespace flutterspec
