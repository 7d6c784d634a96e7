#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flutterspec/errors.hpp"
#include "flutterspec/flutter.hpp"
#include "flutterspec/linalg.hpp"
#include "flutterspec/operator.hpp"

namespace flutterspec {

/// Scaled continuation coordinates are (U / u, chi_R / chi, chi_I / chi).
struct ContinuationScale {
  double u = 1.0;
  double chi = 1.0;

  static ContinuationScale from_origin(const EigenPoint& p) {
    return {std::max(std::abs(p.U), 1.0), std::max(std::abs(p.chi_R), 1.0)};
  }
  Eigen::Vector3d scaled(const EigenPoint& p) const { return {p.U / u, p.chi_R / chi, p.chi_I / chi}; }
};

/// Unit tangent in scaled coordinates.
struct Tangent {
  double dU = 0.0;
  double dchi_R = 0.0;
  double dchi_I = 0.0;

  Eigen::Vector3d vec() const { return {dU, dchi_R, dchi_I}; }
  Tangent operator-() const { return {-dU, -dchi_R, -dchi_I}; }
  static Tangent from(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

enum class CorrectorKind { Slp, Newton };

/// Pseudo-arclength constraint form used inside the SLP corrector.
///  Absolute:  t . (p - base) = ds, residual carried into each linear solve.
///  Increment: t . dp = 0 at every iteration (valid when the guess already
///             lies on the constraint plane).
enum class ConstraintForm { Absolute, Increment };

struct ContinuationSettings {
  double ds = 0.05;
  int max_steps = 500;
  double corrector_tol = 1e-10;
  int max_corrector_iters = 25;
  double step_shrink = 0.5;
  double step_grow = 1.3;
  double min_ds = 1e-6;
  double max_ds = 0.5;
  std::optional<ContinuationScale> scale;
  CorrectorKind corrector = CorrectorKind::Slp;
  ConstraintForm constraint = ConstraintForm::Absolute;

  void validate() const {
    if (!(min_ds > 0.0 && min_ds <= ds && ds <= max_ds)) {
      throw InvalidArgument("continuation: need 0 < min_ds <= ds <= max_ds");
    }
    if (!(corrector_tol > 0.0)) throw InvalidArgument("continuation: corrector_tol must be positive");
    if (max_corrector_iters < 1) throw InvalidArgument("continuation: max_corrector_iters must be >= 1");
    if (max_steps < 0) throw InvalidArgument("continuation: max_steps must be >= 0");
    if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw InvalidArgument("continuation: step_shrink must be in (0,1)");
    if (!(step_grow > 1.0)) throw InvalidArgument("continuation: step_grow must be > 1");
    if (scale && !(scale->u > 0.0 && scale->chi > 0.0)) throw InvalidArgument("continuation: scales must be positive");
  }
};

struct PathOrigin {
  enum class Kind { FlutterPoint, Point, Natural, Damping };
  Kind kind = Kind::Point;
  EigenPoint start;
};

inline const char* to_string(PathOrigin::Kind k) {
  switch (k) {
    case PathOrigin::Kind::FlutterPoint:
      return "flutter_point";
    case PathOrigin::Kind::Point:
      return "point";
    case PathOrigin::Kind::Natural:
      return "natural";
    case PathOrigin::Kind::Damping:
      return "damping";
  }
  return "point";
}

/// Ordered eigenpoints along a damping path. s is cumulative arclength in
/// scaled coordinates; for pseudo-arclength paths s[k+1] - s[k] is the
/// accepted step, i.e. the tangent projection of the chord.
struct ModePath {
  std::vector<EigenPoint> points;
  std::vector<double> s;
  std::vector<double> step_ds;                 // accepted ds per step (size = points - 1)
  std::vector<double> predictor_displacement;  // |corrected - predicted|, scaled
  std::vector<Tangent> tangents;               // tangent used for each step
  PathOrigin origin;
  int direction = 1;
  ContinuationScale scale;
  std::string termination = "max-steps";
  int mode_switches = 0;

  std::size_t size() const noexcept { return points.size(); }
};

struct CorrectorReport {
  int iterations = 0;
  bool mode_switch = false;
};

// ---------------------------------------------------------------------------
// Bordered Newton: unknowns (Re x, Im x, theta_1..theta_k) where theta_j moves
// the parameters along direction v_j in (chi_R, chi_I, U). Equations are
// A x = 0, c^H x = 1 and k - 2 linear constraints a . (chi_R, chi_I, U) = rhs.

struct LinearConstraint {
  Eigen::Vector3d a;  // over (chi_R, chi_I, U)
  double rhs = 0.0;
};

namespace detail {

inline Eigen::Vector3d params_of(const EigenPoint& p) { return {p.chi_R, p.chi_I, p.U}; }

inline void set_params(EigenPoint& p, const Eigen::Vector3d& v) {
  p.chi_R = v(0);
  p.chi_I = v(1);
  p.U = v(2);
}

inline CVector initial_vector(const ParametricOperator& op, const EigenPoint& g) {
  if (g.x.size() == op.dim() && g.x.norm() > 0.0) return g.x / g.x.norm();
  return sigma_min(op, g.chi(), g.U).x;
}

/// Newton on the bordered real system. `weights` divides (chi_R, chi_I, U)
/// increments for the convergence test.
inline EigenPoint bordered_newton(const ParametricOperator& op, const EigenPoint& guess,
                                  const std::vector<Eigen::Vector3d>& directions,
                                  const std::vector<LinearConstraint>& constraints, const Eigen::Vector3d& weights,
                                  double tol, int max_iters, int* iterations = nullptr) {
  const Eigen::Index n = op.dim();
  const auto k = static_cast<Eigen::Index>(directions.size());
  const auto m = static_cast<Eigen::Index>(constraints.size());
  if (m != k - 2) throw InvalidArgument("bordered_newton: need exactly (free parameters - 2) constraints");

  EigenPoint cur = guess;
  CVector x = initial_vector(op, guess);
  const CVector c = x;
  const Eigen::Index rows = 2 * n + 2 + m, cols = 2 * n + k;

  auto residual = [&](const EigenPoint& p, const CVector& v) {
    const CVector ax = evaluate(op, p.chi(), p.U) * v;
    Eigen::VectorXd G(rows);
    G.head(n) = ax.real();
    G.segment(n, n) = ax.imag();
    const cdouble nrm = c.dot(v) - 1.0;
    G(2 * n) = nrm.real();
    G(2 * n + 1) = nrm.imag();
    const Eigen::Vector3d pv = params_of(p);
    for (Eigen::Index r = 0; r < m; ++r) {
      G(2 * n + 2 + r) = constraints[static_cast<std::size_t>(r)].a.dot(pv) - constraints[static_cast<std::size_t>(r)].rhs;
    }
    return G;
  };

  Eigen::VectorXd G = residual(cur, x);
  double best = G.norm();
  for (int it = 1; it <= max_iters; ++it) {
    const CMatrix A = evaluate(op, cur.chi(), cur.U);
    const OperatorDerivatives d = param_derivatives(op, cur.chi_R, cur.chi_I, cur.U);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, cols);
    J.block(0, 0, n, n) = A.real();
    J.block(n, 0, n, n) = A.imag();
    J.block(0, n, n, n) = -A.imag();  // d/d(Im x) of A x is i A
    J.block(n, n, n, n) = A.real();
    // c^H x: derivative wrt Re x_j is conj(c_j), wrt Im x_j is i conj(c_j)
    J.block(2 * n, 0, 1, n) = c.real().transpose();
    J.block(2 * n + 1, 0, 1, n) = -c.imag().transpose();
    J.block(2 * n, n, 1, n) = c.imag().transpose();
    J.block(2 * n + 1, n, 1, n) = c.real().transpose();
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Vector3d& v = directions[static_cast<std::size_t>(j)];
      const CVector col = (v(0) * d.d_chi_r + v(1) * d.d_chi_i + v(2) * d.d_u) * x;
      J.block(0, 2 * n + j, n, 1) = col.real();
      J.block(n, 2 * n + j, n, 1) = col.imag();
      for (Eigen::Index r = 0; r < m; ++r) J(2 * n + 2 + r, 2 * n + j) = constraints[static_cast<std::size_t>(r)].a.dot(v);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    if (!(lu.rcond() > 1e-14)) {
      throw NumericalError("bordered Newton: singular Jacobian");
    }
    const Eigen::VectorXd step = lu.solve(-G);

    auto apply = [&](double lam, EigenPoint& p, CVector& v) {
      p = cur;
      v = x;
      for (Eigen::Index q = 0; q < n; ++q) v(q) += lam * cdouble(step(q), step(n + q));
      Eigen::Vector3d pv = params_of(cur);
      for (Eigen::Index j = 0; j < k; ++j) pv += lam * step(2 * n + j) * directions[static_cast<std::size_t>(j)];
      set_params(p, pv);
    };
    EigenPoint trial;
    CVector xt;
    double lam = 1.0;
    Eigen::VectorXd Gt;
    for (int h = 0;; ++h, lam *= 0.5) {
      apply(lam, trial, xt);
      Gt = residual(trial, xt);
      if (Gt.norm() < G.norm() || h >= 20) break;
    }
    Eigen::Vector3d dp = params_of(trial) - params_of(cur);
    cur = trial;
    x = xt;
    G = Gt;
    best = std::min(best, G.norm());
    const double inc = dp.cwiseQuotient(weights).norm();
    const CVector xh = x / x.norm();
    const double res = (evaluate(op, cur.chi(), cur.U) * xh).norm();
    double con = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) con = std::max(con, std::abs(G(2 * n + 2 + r)));
    if (!std::isfinite(inc) || !std::isfinite(res)) break;
    if (inc <= tol && res <= tol && con <= tol) {
      if (iterations) *iterations = it;
      cur.x = xh;
      cur.residual = res;
      return cur;
    }
  }
  throw ConvergenceError("bordered Newton: no convergence", {cur.U, cur.chi_R, cur.chi_I}, best);
}

}  // namespace detail

/// Solves for (chi_R, chi_I) at fixed U from a nearby guess.
inline EigenPoint solve_at_fixed_u(const ParametricOperator& op, double U, const EigenPoint& guess, double tol = 1e-10,
                                   int max_iters = 25, int* iterations = nullptr) {
  EigenPoint g = guess;
  g.U = U;
  const ContinuationScale sc = ContinuationScale::from_origin(guess);
  return detail::bordered_newton(op, g, {{1, 0, 0}, {0, 1, 0}}, {}, {sc.chi, sc.chi, sc.u}, tol, max_iters,
                                 iterations);
}

// ---------------------------------------------------------------------------
// Tangent and predictor

inline Tangent fd_tangent(const EigenPoint& prev, const EigenPoint& curr, const ContinuationScale& scale) {
  const Eigen::Vector3d d = scale.scaled(curr) - scale.scaled(prev);
  const double nrm = d.norm();
  if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericalError("fd_tangent: coincident points (degenerate tangent)");
  return Tangent::from(d / nrm);
}

/// Tangent at a converged point from centred natural-continuation solves at
/// U +- delta_U. Oriented so dchi_I > 0, then multiplied by `direction`.
inline Tangent initial_tangent(const ParametricOperator& op, const EigenPoint& start, const ContinuationScale& scale,
                               std::optional<double> delta_U = std::nullopt, int direction = 1, double tol = 1e-10) {
  const double du = delta_U.value_or(1e-3 * (start.U != 0.0 ? std::abs(start.U) : 1.0));
  if (!(du > 0.0)) throw InvalidArgument("initial_tangent: delta_U must be positive");
  EigenPoint plus, minus;
  try {
    plus = solve_at_fixed_u(op, start.U + du, start, tol);
    minus = solve_at_fixed_u(op, start.U - du, start, tol);
  } catch (const Error& e) {
    throw NumericalError(std::string("initial_tangent: micro-step did not converge: ") + e.what());
  }
  const double h = plus.U - minus.U;
  Eigen::Vector3d t(1.0 / scale.u, (plus.chi_R - minus.chi_R) / h / scale.chi, (plus.chi_I - minus.chi_I) / h / scale.chi);
  t.normalize();
  if (t(2) < 0.0) t = -t;
  if (direction < 0) t = -t;
  return Tangent::from(t);
}

inline EigenPoint predictor(const EigenPoint& base, const Tangent& t, double ds, const ContinuationScale& scale) {
  EigenPoint g = base;
  g.U = base.U + ds * t.dU * scale.u;
  g.chi_R = base.chi_R + ds * t.dchi_R * scale.chi;
  g.chi_I = base.chi_I + ds * t.dchi_I * scale.chi;
  return g;
}

inline double constraint_residual(const EigenPoint& p, const EigenPoint& base, const Tangent& t, double ds,
                                  const ContinuationScale& scale) {
  return t.vec().dot(scale.scaled(p) - scale.scaled(base)) - ds;
}

// ---------------------------------------------------------------------------
// Correctors

/// Successive linear problems: at each iterate, linearise A in (chi_R, chi_I,
/// U) and solve the linear three-parameter problem
///   (A0 + a A_R + b A_I + c A_U) x = 0
///   conj(A0 + a A_R + b A_I + c A_U) y = 0
///   (t . (a, b, c)_scaled - r) z = 0
/// by operator determinants, taking the smallest scaled increment.
inline EigenPoint corrector_slp(const ParametricOperator& op, const EigenPoint& guess, const EigenPoint& base,
                                const Tangent& t, double ds, const ContinuationSettings& settings,
                                const ContinuationScale& scale, ConstraintForm form = ConstraintForm::Absolute,
                                CorrectorReport* report = nullptr) {
  EigenPoint cur = guess;
  CVector x = detail::initial_vector(op, guess);
  const std::array<double, 3> var_scale{scale.chi, scale.chi, scale.u};
  double best = std::numeric_limits<double>::infinity();
  bool switched = false;

  for (int it = 1; it <= settings.max_corrector_iters; ++it) {
    const CMatrix A0 = evaluate(op, cur.chi(), cur.U);
    const OperatorDerivatives d = param_derivatives(op, cur.chi_R, cur.chi_I, cur.U);
    const double r = form == ConstraintForm::Absolute ? -constraint_residual(cur, base, t, ds, scale) : 0.0;

    std::array<LinearMepEquation, 3> eqs;
    eqs[0].b = {A0, d.d_chi_r, d.d_chi_i, d.d_u};
    eqs[1].b = {A0.conjugate(), d.d_chi_r.conjugate(), d.d_chi_i.conjugate(), d.d_u.conjugate()};
    eqs[2].b = {CMatrix::Constant(1, 1, -r), CMatrix::Constant(1, 1, t.dchi_R / scale.chi),
                CMatrix::Constant(1, 1, t.dchi_I / scale.chi), CMatrix::Constant(1, 1, t.dU / scale.u)};

    std::vector<std::array<cdouble, 3>> sols;
    try {
      sols = solve_linear_mep3(eqs, var_scale);
    } catch (const NumericalError& e) {
      throw ConvergenceError(std::string("corrector_slp: ") + e.what(), {cur.U, cur.chi_R, cur.chi_I}, best);
    }
    // Prefer (numerically) real triples; among them the nearest in scaled norm.
    const std::array<cdouble, 3>* pick = nullptr;
    double pick_norm = 0.0;
    bool pick_real = false;
    for (const auto& s : sols) {
      double re2 = 0.0, im2 = 0.0;
      for (int j = 0; j < 3; ++j) {
        re2 += std::norm(s[static_cast<std::size_t>(j)].real() / var_scale[static_cast<std::size_t>(j)]);
        im2 += std::norm(s[static_cast<std::size_t>(j)].imag() / var_scale[static_cast<std::size_t>(j)]);
      }
      const double nrm = std::sqrt(re2 + im2);
      const bool real = std::sqrt(im2) <= 1e-6 * (1.0 + std::sqrt(re2));
      if (!std::isfinite(nrm)) continue;
      if (!pick || (real && !pick_real) || (real == pick_real && nrm < pick_norm)) {
        pick = &s;
        pick_norm = nrm;
        pick_real = real;
      }
    }
    if (!pick) throw ConvergenceError("corrector_slp: no finite increment", {cur.U, cur.chi_R, cur.chi_I}, best);

    const double a = (*pick)[0].real(), b = (*pick)[1].real(), c = (*pick)[2].real();
    cur.chi_R += a;
    cur.chi_I += b;
    cur.U += c;
    if (!std::isfinite(cur.chi_R) || !std::isfinite(cur.chi_I) || !std::isfinite(cur.U)) break;

    auto sp = sigma_min(op, cur.chi(), cur.U);
    CVector xn = phase_aligned(sp.x, x);
    if ((xn - x).norm() > 0.5) switched = true;
    x = std::move(xn);
    const double res = sp.sigma;
    const double inc = std::sqrt(std::pow(a / scale.chi, 2) + std::pow(b / scale.chi, 2) + std::pow(c / scale.u, 2));
    const double con = std::abs(constraint_residual(cur, base, t, ds, scale));
    best = std::min(best, std::max(res, con));
    if (res <= settings.corrector_tol && inc <= settings.corrector_tol && con <= settings.corrector_tol) {
      cur.x = x;
      cur.residual = res;
      if (report) *report = {it, switched};
      return cur;
    }
  }
  throw ConvergenceError("corrector_slp: no convergence in " + std::to_string(settings.max_corrector_iters) +
                             " iterations",
                         {cur.U, cur.chi_R, cur.chi_I}, best);
}

/// Cross-check corrector: Newton on the full bordered system with the
/// pseudo-arclength constraint as the last row.
inline EigenPoint corrector_newton(const ParametricOperator& op, const EigenPoint& guess, const EigenPoint& base,
                                   const Tangent& t, double ds, const ContinuationSettings& settings,
                                   const ContinuationScale& scale, CorrectorReport* report = nullptr) {
  LinearConstraint con;
  con.a = Eigen::Vector3d(t.dchi_R / scale.chi, t.dchi_I / scale.chi, t.dU / scale.u);
  con.rhs = ds + t.vec().dot(scale.scaled(base));
  int iters = 0;
  EigenPoint out = detail::bordered_newton(op, guess, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {con},
                                          {scale.chi, scale.chi, scale.u}, settings.corrector_tol,
                                          settings.max_corrector_iters, &iters);
  if (report) *report = {iters, false};
  return out;
}

inline EigenPoint run_corrector(const ParametricOperator& op, const EigenPoint& guess, const EigenPoint& base,
                                const Tangent& t, double ds, const ContinuationSettings& settings,
                                const ContinuationScale& scale, CorrectorReport* report = nullptr) {
  if (settings.corrector == CorrectorKind::Newton) {
    return corrector_newton(op, guess, base, t, ds, settings, scale, report);
  }
  return corrector_slp(op, guess, base, t, ds, settings, scale, settings.constraint, report);
}

// ---------------------------------------------------------------------------
// Path tracing

inline ModePath trace_path(const ParametricOperator& op, const EigenPoint& start, int direction,
                           const ContinuationSettings& settings,
                           PathOrigin::Kind origin_kind = PathOrigin::Kind::Point) {
  settings.validate();
  if (!(start.residual <= settings.corrector_tol)) {
    throw InvalidArgument("trace_path: start point residual exceeds corrector_tol");
  }
  ModePath path;
  path.scale = settings.scale.value_or(ContinuationScale::from_origin(start));
  path.direction = direction < 0 ? -1 : 1;
  path.origin = {origin_kind, start};
  path.points.push_back(start);
  path.s.push_back(0.0);
  if (settings.max_steps == 0) return path;

  Tangent t;
  try {
    t = initial_tangent(op, start, path.scale, std::nullopt, path.direction, settings.corrector_tol);
  } catch (const Error& e) {
    throw ContinuationError(std::string("trace_path: first step failed: ") + e.what());
  }

  double ds = settings.ds;
  int steps = 0;
  path.termination = "max-steps";
  while (steps < settings.max_steps) {
    const EigenPoint& base = path.points.back();
    const EigenPoint guess = predictor(base, t, ds, path.scale);
    CorrectorReport rep;
    EigenPoint p;
    try {
      p = run_corrector(op, guess, base, t, ds, settings, path.scale, &rep);
    } catch (const Error&) {
      ds *= settings.step_shrink;
      if (ds < settings.min_ds) {
        if (path.points.size() == 1) throw ContinuationError("trace_path: first step failed (min_ds exhausted)");
        path.termination = "min-ds";
        break;
      }
      continue;
    }
    if (!op.window().contains(p.U, p.chi_R)) {
      path.termination = "window-exit";
      break;
    }
    if (rep.mode_switch) ++path.mode_switches;
    path.predictor_displacement.push_back((path.scale.scaled(p) - path.scale.scaled(guess)).norm());
    path.tangents.push_back(t);
    path.step_ds.push_back(ds);
    path.s.push_back(path.s.back() + ds);
    const EigenPoint prev = base;
    path.points.push_back(std::move(p));
    t = fd_tangent(prev, path.points.back(), path.scale);
    ++steps;
    if (rep.iterations <= 3) ds = std::min(ds * settings.step_grow, settings.max_ds);
  }
  return path;
}

inline ModePath trace_path(const ParametricOperator& op, const FlutterPoint& start, int direction,
                           const ContinuationSettings& settings) {
  return trace_path(op, start.point, direction, settings, PathOrigin::Kind::FlutterPoint);
}

// ---------------------------------------------------------------------------
// Natural and damping-parameter continuation

/// Marches U on a fixed grid from U_start to U_end (endpoint included),
/// solving for chi at each U from the previous point.
inline ModePath natural_continuation(const ParametricOperator& op, double U_start, double U_end, double dU,
                                     const EigenPoint& seed, double tol = 1e-10, int max_iters = 25) {
  if (!(std::abs(dU) > 0.0) || !std::isfinite(dU)) throw InvalidArgument("natural_continuation: dU must be nonzero");
  ModePath path;
  path.origin = {PathOrigin::Kind::Natural, seed};
  path.scale = ContinuationScale::from_origin(seed);
  const double dir = U_end >= U_start ? 1.0 : -1.0;
  path.direction = static_cast<int>(dir);
  const double step = dir * std::abs(dU);

  EigenPoint cur;
  try {
    cur = solve_at_fixed_u(op, U_start, seed, tol, max_iters);
  } catch (const Error& e) {
    throw ContinuationError(std::string("natural_continuation: seed did not converge: ") + e.what());
  }
  path.points.push_back(cur);
  path.s.push_back(0.0);
  path.termination = "range-end";
  for (long k = 1;; ++k) {
    if (path.points.back().U == U_end) break;
    double U = U_start + static_cast<double>(k) * step;
    if ((U - U_end) * dir > 0.0) U = U_end;
    try {
      EigenPoint next = solve_at_fixed_u(op, U, path.points.back(), tol, max_iters);
      if (next.x.size() == path.points.back().x.size()) next.x = phase_aligned(next.x, path.points.back().x);
      const double d = (path.scale.scaled(next) - path.scale.scaled(path.points.back())).norm();
      path.step_ds.push_back(d);
      path.s.push_back(path.s.back() + d);
      path.points.push_back(std::move(next));
    } catch (const Error& e) {
      path.termination = std::string("solver-failure at U=") + std::to_string(U);
      break;
    }
  }
  return path;
}

/// Continuation in a prescribed damping value: for each d, solve for (chi_R, U)
/// with chi tied to chi_R through the parameterization. Stops at the first
/// failure, which near a damping extremum is the expected outcome.
inline ModePath damping_continuation(const ParametricOperator& op, const std::vector<double>& d_values,
                                     DampingParameterization p, const EigenPoint& seed, double tol = 1e-10,
                                     int max_iters = 25, double max_jump = 0.5) {
  if (d_values.empty()) throw InvalidArgument("damping_continuation: no damping values");
  for (std::size_t k = 1; k < d_values.size(); ++k) {
    if ((d_values[k] - d_values[k - 1]) * (d_values.back() - d_values.front()) <= 0.0) {
      throw InvalidArgument("damping_continuation: damping values must be strictly monotone");
    }
  }
  ModePath path;
  path.origin = {PathOrigin::Kind::Damping, seed};
  path.scale = ContinuationScale::from_origin(seed);
  path.termination = "range-end";

  auto solve = [&](double d, const EigenPoint& guess) {
    EigenPoint g = guess;
    g.chi_I = damping_to_complex(p, g.chi_R, d).imag();
    const double slope = damping_slope(p, d);
    return detail::bordered_newton(op, g, {{1, slope, 0}, {0, 0, 1}}, {},
                                   {path.scale.chi, path.scale.chi, path.scale.u}, tol, max_iters);
  };

  try {
    path.points.push_back(solve(d_values.front(), seed));
  } catch (const Error& e) {
    throw ContinuationError(std::string("damping_continuation: seed did not converge: ") + e.what());
  }
  path.s.push_back(0.0);
  for (std::size_t k = 1; k < d_values.size(); ++k) {
    try {
      EigenPoint next = solve(d_values[k], path.points.back());
      const double jump = (path.scale.scaled(next) - path.scale.scaled(path.points.back())).norm();
      if (jump > max_jump) {
        path.termination = "turning-point suspected";
        break;
      }
      next.x = phase_aligned(next.x, path.points.back().x);
      path.step_ds.push_back(jump);
      path.s.push_back(path.s.back() + jump);
      path.points.push_back(std::move(next));
    } catch (const Error&) {
      path.termination = "turning-point suspected";
      break;
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Post-processing: flight envelope and damping extremum

inline double zeta_of(const EigenPoint& p) { return modal_damping_ratio(p.chi()); }

enum class EnvelopeSide { Subcritical, Supercritical };

inline const char* to_string(EnvelopeSide s) {
  return s == EnvelopeSide::Subcritical ? "subcritical" : "supercritical";
}

/// A crossing of zeta = zeta_max. Subcritical: zeta falls with U, so the
/// admissible speeds lie below U_star. Supercritical: the reverse.
struct EnvelopeCrossing {
  double zeta_max = 0.0;
  double U_star = 0.0;
  std::pair<std::size_t, std::size_t> bracket{0, 0};
  EnvelopeSide side = EnvelopeSide::Subcritical;
  EigenPoint point;
  double zeta = 0.0;
  bool refined = false;
};

namespace detail {

/// Path point on the chord plane between points k and k+1 at fraction f.
inline EigenPoint point_on_segment(const ParametricOperator& op, const ModePath& path, std::size_t k, double f,
                                   const ContinuationSettings& settings) {
  const EigenPoint& a = path.points[k];
  const EigenPoint& b = path.points[k + 1];
  if (f <= 0.0) return a;
  if (f >= 1.0) return b;
  const Eigen::Vector3d chord = path.scale.scaled(b) - path.scale.scaled(a);
  const double len = chord.norm();
  const Tangent t = Tangent::from(chord / len);
  EigenPoint guess = a;
  guess.U = a.U + f * (b.U - a.U);
  guess.chi_R = a.chi_R + f * (b.chi_R - a.chi_R);
  guess.chi_I = a.chi_I + f * (b.chi_I - a.chi_I);
  return run_corrector(op, guess, a, t, f * len, settings, path.scale);
}

inline EnvelopeSide side_of(const ModePath& path, std::size_t k0, std::size_t k1) {
  const auto& a = path.points[k0];
  const auto& b = path.points[k1];
  const double dz = zeta_of(b) - zeta_of(a), du = b.U - a.U;
  return dz * du < 0.0 ? EnvelopeSide::Subcritical : EnvelopeSide::Supercritical;
}

template <class Refine>
std::vector<EnvelopeCrossing> envelope_impl(const ModePath& path, double zeta_max, Refine&& refine) {
  if (path.points.empty()) throw InvalidArgument("flight_envelope: path is empty");
  std::vector<EnvelopeCrossing> out;
  const std::size_t n = path.points.size();
  std::vector<double> f(n);
  for (std::size_t k = 0; k < n; ++k) f[k] = zeta_of(path.points[k]) - zeta_max;
  for (std::size_t k = 0; k < n; ++k) {
    if (f[k] == 0.0) {
      EnvelopeCrossing c;
      c.zeta_max = zeta_max;
      c.point = path.points[k];
      c.U_star = c.point.U;
      c.zeta = zeta_of(c.point);
      c.bracket = {k, k};
      c.side = n > 1 ? side_of(path, k == 0 ? 0 : k - 1, k == 0 ? 1 : k) : EnvelopeSide::Subcritical;
      c.refined = true;
      out.push_back(c);
      continue;
    }
    if (k + 1 < n && f[k + 1] != 0.0 && (f[k] < 0.0) != (f[k + 1] < 0.0)) {
      EnvelopeCrossing c;
      c.zeta_max = zeta_max;
      c.bracket = {k, k + 1};
      c.side = side_of(path, k, k + 1);
      refine(k, f[k], f[k + 1], c);
      c.U_star = c.point.U;
      c.zeta = zeta_of(c.point);
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

/// Crossings located by linear interpolation in arclength only (no operator).
inline std::vector<EnvelopeCrossing> flight_envelope_interpolated(const ModePath& path, double zeta_max) {
  return detail::envelope_impl(path, zeta_max, [&](std::size_t k, double f0, double f1, EnvelopeCrossing& c) {
    const double frac = f0 / (f0 - f1);
    const EigenPoint& a = path.points[k];
    const EigenPoint& b = path.points[k + 1];
    c.point = a;
    c.point.U = a.U + frac * (b.U - a.U);
    c.point.chi_R = a.chi_R + frac * (b.chi_R - a.chi_R);
    c.point.chi_I = a.chi_I + frac * (b.chi_I - a.chi_I);
    c.refined = false;
  });
}

/// Crossings of zeta = zeta_max along a path, each bracketed by linear
/// interpolation and then driven to |zeta - zeta_max| ~ 1e-12 by
/// Illinois-style false position over corrector solves on the chord plane.
inline std::vector<EnvelopeCrossing> flight_envelope(const ParametricOperator& op, const ModePath& path,
                                                     double zeta_max, const ContinuationSettings& settings = {}) {
  return detail::envelope_impl(path, zeta_max, [&](std::size_t k, double f0, double f1, EnvelopeCrossing& c) {
    double lo = 0.0, hi = 1.0, flo = f0, fhi = f1;
    int side = 0;
    EigenPoint best = path.points[k];
    double fbest = flo;
    for (int it = 0; it < 60; ++it) {
      double frac = lo + (hi - lo) * flo / (flo - fhi);
      if (!(frac > lo && frac < hi)) frac = 0.5 * (lo + hi);
      const EigenPoint p = detail::point_on_segment(op, path, k, frac, settings);
      const double fp = zeta_of(p) - zeta_max;
      if (std::abs(fp) < std::abs(fbest)) {
        fbest = fp;
        best = p;
      }
      if (std::abs(fp) <= 1e-13 || hi - lo < 1e-15) break;
      if ((fp < 0.0) == (flo < 0.0)) {
        lo = frac;
        flo = fp;
        if (side == -1) fhi *= 0.5;
        side = -1;
      } else {
        hi = frac;
        fhi = fp;
        if (side == 1) flo *= 0.5;
        side = 1;
      }
    }
    c.point = best;
    c.refined = true;
  });
}

enum class ExtremumKind { Any, Maximum, Minimum };

struct DampingExtremum {
  EigenPoint point;
  double zeta = 0.0;
  std::size_t index = 0;  // nearest path index
  bool boundary = false;
};

/// Interior extremum of zeta along a path, refined by successive parabolic
/// interpolation in arclength with a corrector solve per trial point.
inline DampingExtremum extremum_damping(const ParametricOperator& op, const ModePath& path,
                                        ExtremumKind kind = ExtremumKind::Any,
                                        const ContinuationSettings& settings = {}, int refine_iters = 30) {
  const std::size_t n = path.points.size();
  if (n < 3) throw InvalidArgument("extremum_damping: path needs at least 3 points");
  std::vector<double> z(n);
  for (std::size_t k = 0; k < n; ++k) z[k] = zeta_of(path.points[k]);

  std::optional<std::size_t> pick;
  bool is_max = true;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const bool mx = z[k] >= z[k - 1] && z[k] >= z[k + 1] && (z[k] > z[k - 1] || z[k] > z[k + 1]);
    const bool mn = z[k] <= z[k - 1] && z[k] <= z[k + 1] && (z[k] < z[k - 1] || z[k] < z[k + 1]);
    if (kind == ExtremumKind::Any && (mx || mn)) {
      pick = k;
      is_max = mx;
      break;
    }
    if (kind == ExtremumKind::Maximum && mx && (!pick || z[k] > z[*pick])) pick = k;
    if (kind == ExtremumKind::Minimum && mn && (!pick || z[k] < z[*pick])) {
      pick = k;
      is_max = false;
    }
  }
  if (kind == ExtremumKind::Minimum) is_max = false;

  if (!pick) {
    std::size_t k = n - 1;
    if (kind == ExtremumKind::Maximum) k = z.front() > z.back() ? 0 : n - 1;
    if (kind == ExtremumKind::Minimum) k = z.front() < z.back() ? 0 : n - 1;
    if (kind == ExtremumKind::Any) k = std::abs(z.front()) > std::abs(z.back()) ? 0 : n - 1;
    return {path.points[k], z[k], k, true};
  }

  // Objective to maximise.
  const double sgn = is_max ? 1.0 : -1.0;
  struct Sample {
    double s;
    double f;
    EigenPoint p;
  };
  const std::size_t k = *pick;
  Sample a{path.s[k - 1], sgn * z[k - 1], path.points[k - 1]};
  Sample b{path.s[k], sgn * z[k], path.points[k]};
  Sample c{path.s[k + 1], sgn * z[k + 1], path.points[k + 1]};

  auto evaluate_at = [&](double s) {
    // Segment containing s; parameter runs linearly in s within a segment.
    std::size_t seg = 0;
    while (seg + 2 < n && path.s[seg + 1] < s) ++seg;
    const double f = (s - path.s[seg]) / (path.s[seg + 1] - path.s[seg]);
    EigenPoint p = detail::point_on_segment(op, path, seg, f, settings);
    return Sample{s, sgn * zeta_of(p), std::move(p)};
  };

  const double tol_s = 1e-12 * (1.0 + std::abs(b.s));
  for (int it = 0; it < refine_iters; ++it) {
    const double d1 = b.s - a.s, d2 = b.s - c.s;
    const double num = d1 * d1 * (b.f - c.f) - d2 * d2 * (b.f - a.f);
    const double den = d1 * (b.f - c.f) - d2 * (b.f - a.f);
    if (den == 0.0) break;
    double s_new = b.s - 0.5 * num / den;
    if (!(s_new > a.s && s_new < c.s)) break;
    if (std::abs(s_new - b.s) <= tol_s) break;
    Sample t;
    try {
      t = evaluate_at(s_new);
    } catch (const Error&) {
      break;
    }
    if (t.f >= b.f) {
      if (t.s < b.s) {
        c = std::move(b);
      } else {
        a = std::move(b);
      }
      b = std::move(t);
    } else if (t.s < b.s) {
      a = std::move(t);
    } else {
      c = std::move(t);
    }
  }
  return {b.p, sgn * b.f, k, false};
}

}  // namespace flutterspec
