#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flutterspec/errors.hpp"
#include "flutterspec/operator.hpp"
#include "flutterspec/pseudospectrum.hpp"

namespace flutterspec {

struct FlutterSettings {
  int grid_count = 64;
  int refine_iters = 3;  // total contour passes, the first on the full window
  double tol = 1e-10;
  int max_iters = 50;
};

struct FlutterCandidate {
  Point2 location;
  std::vector<ParameterWindow> window_history;
  double cell_u = 0.0;  // final-grid cell size
  double cell_chi_r = 0.0;
};

struct FlutterPoint {
  EigenPoint point;  // chi_I == 0 exactly
  std::vector<ParameterWindow> window_history;
  int iterations = 0;
  bool is_static = false;  // divergence: chi_R ~ 0
};

struct PolishFailure {
  Point2 candidate;
  std::string message;
};

struct FlutterSearchResult {
  std::vector<FlutterPoint> points;
  std::vector<PolishFailure> failures;
};

namespace detail {

inline std::optional<Point2> segment_intersection(const CellSegment& p, const CellSegment& q, double su, double sw) {
  // Work in cell-normalised coordinates.
  const double ax = p.a.U / su, ay = p.a.chi_R / sw, bx = p.b.U / su, by = p.b.chi_R / sw;
  const double cx = q.a.U / su, cy = q.a.chi_R / sw, dx = q.b.U / su, dy = q.b.chi_R / sw;
  const double rx = bx - ax, ry = by - ay, qx = dx - cx, qy = dy - cy;
  const double den = rx * qy - ry * qx;
  if (den == 0.0) return std::nullopt;
  const double t = ((cx - ax) * qy - (cy - ay) * qx) / den;
  const double s = ((cx - ax) * ry - (cy - ay) * rx) / den;
  if (t < 0.0 || t > 1.0 || s < 0.0 || s > 1.0) return std::nullopt;
  return Point2{p.a.U + t * (p.b.U - p.a.U), p.a.chi_R + t * (p.b.chi_R - p.a.chi_R)};
}

/// Rows of constant U on which Im(det) vanishes identically (real pencils,
/// e.g. zero airspeed). Cells touching them do not yield candidates.
inline std::vector<bool> degenerate_imag_rows(const ComplexField& f) {
  std::vector<bool> out(static_cast<std::size_t>(f.grid.u_axis.count), true);
  for (int i = 0; i < f.grid.u_axis.count; ++i) {
    for (int j = 0; j < f.grid.w_axis.count; ++j) {
      if (complex_part(f.log_abs(i, j), f.phase(i, j), 0.0, ComplexPart::Imag) != 0.0) {
        out[static_cast<std::size_t>(i)] = false;
        break;
      }
    }
  }
  return out;
}

inline void merge_into(std::vector<FlutterCandidate>& list, FlutterCandidate c) {
  for (const auto& e : list) {
    if (std::abs(e.location.U - c.location.U) <= std::max(e.cell_u, c.cell_u) &&
        std::abs(e.location.chi_R - c.location.chi_R) <= std::max(e.cell_chi_r, c.cell_chi_r)) {
      return;
    }
  }
  list.push_back(std::move(c));
}

inline ParameterWindow shrink_around(const ParameterWindow& parent, const ParameterWindow& bounds, Point2 c) {
  const double hu = parent.u_span() / 8.0;  // new span = parent span / 4
  const double hw = parent.chi_r_span() / 8.0;
  auto place = [](double centre, double half, double lo, double hi, double& out_lo, double& out_hi) {
    out_lo = centre - half;
    out_hi = centre + half;
    if (out_lo < lo) {
      out_hi += lo - out_lo;
      out_lo = lo;
    }
    if (out_hi > hi) {
      out_lo -= out_hi - hi;
      out_hi = hi;
    }
    out_lo = std::max(out_lo, lo);
  };
  ParameterWindow w;
  place(c.U, hu, bounds.u_min, bounds.u_max, w.u_min, w.u_max);
  place(c.chi_R, hw, bounds.chi_r_min, bounds.chi_r_max, w.chi_r_min, w.chi_r_max);
  return w;
}

/// Re(det) = 0 / Im(det) = 0 crossings within one contour pass.
inline std::vector<Point2> contour_crossings(const ParametricOperator& op, const ParameterWindow& win, int n) {
  const Grid2D grid = Grid2D::over(win, n, n, 0.0);
  const ComplexField field = compute_det_field(op, grid);
  const auto degenerate = degenerate_imag_rows(field);
  const auto re = contour_segments(field, ComplexPart::Real);
  const auto im = contour_segments(field, ComplexPart::Imag);

  std::vector<std::vector<std::size_t>> im_by_cell(static_cast<std::size_t>((n - 1) * (n - 1)));
  for (std::size_t k = 0; k < im.size(); ++k) {
    im_by_cell[static_cast<std::size_t>(im[k].i * (n - 1) + im[k].j)].push_back(k);
  }
  const double su = grid.u_axis.step(), sw = grid.w_axis.step();
  std::vector<Point2> out;
  for (const auto& rs : re) {
    if (degenerate[static_cast<std::size_t>(rs.i)] || degenerate[static_cast<std::size_t>(rs.i + 1)]) continue;
    for (std::size_t k : im_by_cell[static_cast<std::size_t>(rs.i * (n - 1) + rs.j)]) {
      if (auto p = segment_intersection(rs, im[k], su, sw)) out.push_back(*p);
    }
  }
  return out;
}

inline void refine_candidates(const ParametricOperator& op, const ParameterWindow& bounds, const ParameterWindow& win,
                              int n, int passes_left, std::vector<ParameterWindow> history,
                              std::vector<FlutterCandidate>& out) {
  history.push_back(win);
  const auto pts = contour_crossings(op, win, n);
  const double cu = win.u_span() / (n - 1), cw = win.chi_r_span() / (n - 1);
  std::vector<FlutterCandidate> level;
  for (const auto& p : pts) merge_into(level, {p, history, cu, cw});
  if (passes_left <= 1) {
    for (auto& c : level) merge_into(out, std::move(c));
    return;
  }
  for (const auto& c : level) {
    refine_candidates(op, bounds, shrink_around(win, bounds, c.location), n, passes_left - 1, history, out);
  }
}

inline cdouble det_at(const ParametricOperator& op, double U, double chi_R) {
  return Eigen::PartialPivLU<CMatrix>(evaluate(op, {chi_R, 0.0}, U)).determinant();
}

}  // namespace detail

/// Iterated contour-plot search: intersections of Re(det A) = 0 and
/// Im(det A) = 0 on the real-frequency slice, re-gridded around each hit.
inline std::vector<FlutterCandidate> locate_candidates(const ParametricOperator& op, const ParameterWindow& window,
                                                       int grid_count = 64, int refine_iters = 3) {
  if (grid_count < 8) throw InvalidArgument("locate_candidates: grid_count must be >= 8");
  if (refine_iters < 1) throw InvalidArgument("locate_candidates: refine_iters must be >= 1");
  std::vector<FlutterCandidate> out;
  detail::refine_candidates(op, window, window, grid_count, refine_iters, {}, out);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.location.U < b.location.U || (a.location.U == b.location.U && a.location.chi_R < b.location.chi_R);
  });
  return out;
}

/// Damped 2-D Newton on F(U, chi_R) = (Re det, Im det) with a central
/// finite-difference Jacobian, stopping once sigma_min <= tol.
inline FlutterPoint polish_flutter_point(const ParametricOperator& op, Point2 candidate, double tol = 1e-10,
                                         int max_iters = 50, std::optional<ParameterWindow> flag_window = std::nullopt) {
  double U = candidate.U, w = candidate.chi_R;
  auto sigma_at = [&](double u, double c) { return sigma_min(op, {c, 0.0}, u).sigma; };
  double sigma = sigma_at(U, w);
  double best_sigma = sigma;
  double best_U = U, best_w = w;
  int it = 0;
  // Newton step on F = (Re det, Im det); returns false when halving fails to reduce |F|.
  auto newton_step = [&](double& u, double& c) {
    const cdouble F = detail::det_at(op, u, c);
    const double hu = op.fd_step().u_step(u), hw = op.fd_step().chi_step(c);
    const cdouble dFu = (detail::det_at(op, u + hu, c) - detail::det_at(op, u - hu, c)) / ((u + hu) - (u - hu));
    const cdouble dFw = (detail::det_at(op, u, c + hw) - detail::det_at(op, u, c - hw)) / ((c + hw) - (c - hw));
    Eigen::Matrix2d J;
    J << dFu.real(), dFw.real(), dFu.imag(), dFw.imag();
    const double jdet = J.determinant();
    if (!(std::abs(jdet) > 1e-12 * J.squaredNorm()) || !std::isfinite(jdet)) {
      throw NumericalError("polish_flutter_point: singular Jacobian near (U=" + std::to_string(u) + ", chi_R=" +
                           std::to_string(c) + "); refine the search window");
    }
    const Eigen::Vector2d step = J.inverse() * Eigen::Vector2d(-F.real(), -F.imag());
    const double f0 = std::abs(F);
    double lambda = 1.0;
    for (int h = 0; h <= 20; ++h, lambda *= 0.5) {
      const double u1 = u + lambda * step(0), c1 = c + lambda * step(1);
      if (std::abs(detail::det_at(op, u1, c1)) < f0) {
        u = u1;
        c = c1;
        return true;
      }
    }
    return false;
  };
  while (sigma > tol) {
    if (it >= max_iters) {
      throw ConvergenceError("polish_flutter_point: no convergence in " + std::to_string(max_iters) + " iterations",
                             {best_U, best_w, 0.0}, best_sigma);
    }
    ++it;
    if (!newton_step(U, w)) {
      throw ConvergenceError("polish_flutter_point: line search stalled", {best_U, best_w, 0.0}, best_sigma);
    }
    sigma = sigma_at(U, w);
    if (sigma < best_sigma) {
      best_sigma = sigma;
      best_U = U;
      best_w = w;
    }
  }
  if (it > 0) {
    // One finishing step, kept only if it tightens sigma_min.
    double u1 = U, w1 = w;
    try {
      if (newton_step(u1, w1) && sigma_at(u1, w1) < sigma) {
        U = u1;
        w = w1;
      }
    } catch (const NumericalError&) {
    }
  }
  FlutterPoint fp;
  fp.point = make_eigen_point(op, w, 0.0, U);
  fp.iterations = it;
  const ParameterWindow& fw = flag_window ? *flag_window : op.window();
  fp.is_static = std::abs(w) < 1e-6 * fw.chi_r_span();
  return fp;
}

inline FlutterSearchResult find_flutter_points(const ParametricOperator& op, const ParameterWindow& window,
                                               const FlutterSettings& settings = {}) {
  FlutterSearchResult res;
  for (const auto& c : locate_candidates(op, window, settings.grid_count, settings.refine_iters)) {
    try {
      FlutterPoint fp = polish_flutter_point(op, c.location, settings.tol, settings.max_iters, window);
      fp.window_history = c.window_history;
      // Polishing may walk onto a point already found from another candidate.
      const double cu = c.cell_u, cw = c.cell_chi_r;
      const bool dup = std::any_of(res.points.begin(), res.points.end(), [&](const FlutterPoint& e) {
        return std::abs(e.point.U - fp.point.U) <= cu && std::abs(e.point.chi_R - fp.point.chi_R) <= cw;
      });
      if (!window.contains(fp.point.U, fp.point.chi_R)) {
        res.failures.push_back({c.location, "polished point left the search window"});
      } else if (!dup) {
        res.points.push_back(std::move(fp));
      }
    } catch (const Error& e) {
      res.failures.push_back({c.location, e.what()});
    }
  }
  std::sort(res.points.begin(), res.points.end(),
            [](const FlutterPoint& a, const FlutterPoint& b) { return a.point.U < b.point.U; });
  return res;
}

}  // namespace flutterspec
