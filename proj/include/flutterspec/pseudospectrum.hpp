#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flutterspec/errors.hpp"
#include "flutterspec/operator.hpp"

namespace flutterspec {

struct Axis {
  double min = 0.0;
  double max = 1.0;
  int count = 2;

  double at(int k) const noexcept { return min + (max - min) * static_cast<double>(k) / (count - 1); }
  double step() const noexcept { return (max - min) / (count - 1); }
};

/// Rectangular (U, chi_R) sampling grid at a fixed chi_I.
struct Grid2D {
  Axis u_axis;
  Axis w_axis;
  double chi_I_fixed = 0.0;

  void validate() const {
    for (const Axis* a : {&u_axis, &w_axis}) {
      if (!std::isfinite(a->min) || !std::isfinite(a->max) || !(a->min < a->max)) {
        throw InvalidArgument("grid: axis needs finite min < max");
      }
      if (a->count < 2) throw InvalidArgument("grid: axis count must be >= 2");
    }
    if (!std::isfinite(chi_I_fixed)) throw InvalidArgument("grid: chi_I_fixed must be finite");
  }
  double u(int i) const noexcept { return u_axis.at(i); }
  double w(int j) const noexcept { return w_axis.at(j); }

  static Grid2D over(const ParameterWindow& win, int u_count, int w_count, double chi_I = 0.0) {
    return {{win.u_min, win.u_max, u_count}, {win.chi_r_min, win.chi_r_max, w_count}, chi_I};
  }
};

struct Point2 {
  double U = 0.0;
  double chi_R = 0.0;
};

struct Rect {
  double u_min = 0.0, u_max = 0.0, chi_r_min = 0.0, chi_r_max = 0.0;
};

struct ScalarField {
  Grid2D grid;
  Eigen::MatrixXd values;  // (u_count x w_count)
};

/// det A on a grid, stored as log|det| and phase so large operators do not
/// overflow.
struct ComplexField {
  Grid2D grid;
  Eigen::MatrixXd log_abs;
  Eigen::MatrixXd phase;

  cdouble value(int i, int j) const { return std::polar(std::exp(log_abs(i, j)), phase(i, j)); }
};

struct ContourSet {
  double level = 0.0;
  std::vector<std::vector<Point2>> polylines;
};

struct BorderlineRegion {
  Point2 center;
  double min_sigma = 0.0;
  Rect extent;
  bool near_flutter = false;
  std::size_t node_count = 0;
};

// ---------------------------------------------------------------------------
// Field evaluation

/// Worker count for field evaluation; FLUTTERSPEC_THREADS caps it (0 = auto).
inline unsigned field_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FLUTTERSPEC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return hw;
}

namespace detail {

/// Runs fn(i) for i in [0, rows) across workers; each row is owned by one
/// worker. Rethrows the exception of the lowest failing row.
template <class Fn>
void parallel_rows(int rows, Fn&& fn) {
  const unsigned workers = std::min<unsigned>(field_threads(), static_cast<unsigned>(std::max(rows, 1)));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(rows));
  auto run = [&](unsigned w) {
    for (int i = static_cast<int>(w); i < rows; i += static_cast<int>(workers)) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// log|det| and arg(det) from a partially pivoted LU factorization.
inline std::pair<double, double> log_det(const CMatrix& a) {
  Eigen::PartialPivLU<CMatrix> lu(a);
  const CMatrix& f = lu.matrixLU();
  double log_abs = 0.0;
  double phase = lu.permutationP().determinant() < 0 ? std::numbers::pi : 0.0;
  for (Eigen::Index k = 0; k < f.rows(); ++k) {
    const double mag = std::abs(f(k, k));
    if (mag == 0.0) return {-INFINITY, 0.0};
    log_abs += std::log(mag);
    phase += std::arg(f(k, k));
  }
  phase = std::remainder(phase, 2.0 * std::numbers::pi);
  return {log_abs, phase};
}

}  // namespace detail

inline ScalarField compute_sigma_field(const ParametricOperator& op, const Grid2D& grid) {
  grid.validate();
  ScalarField f{grid, Eigen::MatrixXd(grid.u_axis.count, grid.w_axis.count)};
  detail::parallel_rows(grid.u_axis.count, [&](int i) {
    for (int j = 0; j < grid.w_axis.count; ++j) {
      try {
        f.values(i, j) = sigma_min(op, {grid.w(j), grid.chi_I_fixed}, grid.u(i)).sigma;
      } catch (const Error& e) {
        throw NumericalError("sigma field failed at node (" + std::to_string(i) + ", " + std::to_string(j) +
                             "): " + e.what());
      }
    }
  });
  return f;
}

inline ComplexField compute_det_field(const ParametricOperator& op, const Grid2D& grid) {
  grid.validate();
  ComplexField f{grid, Eigen::MatrixXd(grid.u_axis.count, grid.w_axis.count),
                 Eigen::MatrixXd(grid.u_axis.count, grid.w_axis.count)};
  detail::parallel_rows(grid.u_axis.count, [&](int i) {
    for (int j = 0; j < grid.w_axis.count; ++j) {
      const auto [la, ph] = detail::log_det(evaluate(op, {grid.w(j), grid.chi_I_fixed}, grid.u(i)));
      f.log_abs(i, j) = la;
      f.phase(i, j) = ph;
    }
  });
  return f;
}

// ---------------------------------------------------------------------------
// Marching squares

enum class ComplexPart { Real, Imag };

/// One contour segment inside grid cell (i, j). Endpoints are identified by
/// the grid edge they lie on, so neighbouring cells join exactly.
struct CellSegment {
  int i = 0;
  int j = 0;
  Point2 a, b;
  std::int64_t edge_a = 0, edge_b = 0;
};

namespace detail {

/// Parts of a complex value smaller than this fraction of its modulus are
/// treated as exactly zero (pivot phases of a real determinant sum to k*pi
/// only up to rounding).
inline constexpr double kZeroPartTolerance = 1e-12;

inline double complex_part(double log_abs, double phase, double ref_log, ComplexPart part) {
  if (!std::isfinite(log_abs)) return 0.0;
  const double trig = part == ComplexPart::Real ? std::cos(phase) : std::sin(phase);
  if (std::abs(trig) <= kZeroPartTolerance) return 0.0;
  return std::exp(log_abs - ref_log) * trig;
}

/// Corner values of cell (i, j) in order (i,j), (i+1,j), (i+1,j+1), (i,j+1).
using CornerFn = std::function<std::array<double, 4>(int, int)>;

inline std::vector<CellSegment> march(const Grid2D& g, double level, const CornerFn& corners) {
  const int nu = g.u_axis.count, nw = g.w_axis.count;
  const std::int64_t stride = static_cast<std::int64_t>(nu) * nw;
  auto u_edge = [&](int i, int j) { return static_cast<std::int64_t>(i) * nw + j; };
  auto w_edge = [&](int i, int j) { return stride + static_cast<std::int64_t>(i) * nw + j; };

  std::vector<CellSegment> out;
  for (int i = 0; i + 1 < nu; ++i) {
    for (int j = 0; j + 1 < nw; ++j) {
      const auto v = corners(i, j);
      const double u0 = g.u(i), u1 = g.u(i + 1), w0 = g.w(j), w1 = g.w(j + 1);
      const std::array<Point2, 4> p{{{u0, w0}, {u1, w0}, {u1, w1}, {u0, w1}}};
      const std::array<std::int64_t, 4> edge_ids{u_edge(i, j), w_edge(i + 1, j), u_edge(i, j + 1), w_edge(i, j)};
      std::array<bool, 4> above{};
      for (int k = 0; k < 4; ++k) above[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(k)] > level;

      // Edge k joins corner k and corner k+1.
      auto vertex = [&](int k) {
        const auto a = static_cast<std::size_t>(k), b = static_cast<std::size_t>((k + 1) % 4);
        const double t = (level - v[a]) / (v[b] - v[a]);
        return Point2{p[a].U + t * (p[b].U - p[a].U), p[a].chi_R + t * (p[b].chi_R - p[a].chi_R)};
      };
      auto emit = [&](int ea, int eb) {
        out.push_back({i, j, vertex(ea), vertex(eb), edge_ids[static_cast<std::size_t>(ea)],
                       edge_ids[static_cast<std::size_t>(eb)]});
      };

      std::vector<int> crossing;
      for (int k = 0; k < 4; ++k) {
        if (above[static_cast<std::size_t>(k)] != above[static_cast<std::size_t>((k + 1) % 4)]) crossing.push_back(k);
      }
      if (crossing.size() == 2) {
        emit(crossing[0], crossing[1]);
      } else if (crossing.size() == 4) {
        const double center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
        if ((center > level) == above[0]) {
          // Corners 0 and 2 connect through the centre: isolate 1 and 3.
          emit(0, 1);
          emit(2, 3);
        } else {
          emit(3, 0);
          emit(1, 2);
        }
      }
    }
  }
  return out;
}

inline ContourSet join_segments(const std::vector<CellSegment>& segs, double level) {
  ContourSet cs;
  cs.level = level;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> by_edge;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    by_edge[segs[s].edge_a].push_back(s);
    by_edge[segs[s].edge_b].push_back(s);
  }
  std::vector<bool> used(segs.size(), false);

  auto other_segment = [&](std::int64_t edge, std::size_t self) -> std::optional<std::size_t> {
    for (std::size_t s : by_edge[edge]) {
      if (s != self && !used[s]) return s;
    }
    return std::nullopt;
  };

  auto walk = [&](std::size_t start, bool from_a) {
    std::vector<Point2> line;
    std::size_t cur = start;
    std::int64_t entry = from_a ? segs[cur].edge_a : segs[cur].edge_b;
    line.push_back(from_a ? segs[cur].a : segs[cur].b);
    const std::int64_t first_edge = entry;
    while (true) {
      used[cur] = true;
      const bool enter_a = segs[cur].edge_a == entry;
      const std::int64_t exit = enter_a ? segs[cur].edge_b : segs[cur].edge_a;
      line.push_back(enter_a ? segs[cur].b : segs[cur].a);
      if (exit == first_edge) {
        line.back() = line.front();  // closed loop repeats its first point exactly
        break;
      }
      const auto next = other_segment(exit, cur);
      if (!next) break;
      cur = *next;
      entry = exit;
    }
    if (line.size() >= 2) cs.polylines.push_back(std::move(line));
  };

  // Open chains start at edges touched by a single segment.
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (used[s]) continue;
    if (by_edge[segs[s].edge_a].size() == 1) {
      walk(s, true);
    } else if (by_edge[segs[s].edge_b].size() == 1) {
      walk(s, false);
    }
  }
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (!used[s]) walk(s, true);
  }
  return cs;
}

inline CornerFn scalar_corners(const ScalarField& f) {
  return [&f](int i, int j) {
    return std::array<double, 4>{f.values(i, j), f.values(i + 1, j), f.values(i + 1, j + 1), f.values(i, j + 1)};
  };
}

/// Corners of a complex field reconstructed with a per-cell common scale.
inline CornerFn complex_corners(const ComplexField& f, ComplexPart part) {
  return [&f, part](int i, int j) {
    const std::array<std::pair<int, int>, 4> idx{{{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}}};
    double ref = -INFINITY;
    for (auto [a, b] : idx) ref = std::max(ref, f.log_abs(a, b));
    if (!std::isfinite(ref)) ref = 0.0;
    std::array<double, 4> v{};
    for (std::size_t k = 0; k < 4; ++k) {
      v[k] = complex_part(f.log_abs(idx[k].first, idx[k].second), f.phase(idx[k].first, idx[k].second), ref, part);
    }
    return v;
  };
}

}  // namespace detail

inline std::vector<CellSegment> contour_segments(const ScalarField& f, double level) {
  return detail::march(f.grid, level, detail::scalar_corners(f));
}

inline std::vector<CellSegment> contour_segments(const ComplexField& f, ComplexPart part, double level = 0.0) {
  return detail::march(f.grid, level, detail::complex_corners(f, part));
}

inline ContourSet extract_contours(const ScalarField& f, double level) {
  return detail::join_segments(contour_segments(f, level), level);
}

inline ContourSet extract_contours(const ComplexField& f, ComplexPart part, double level = 0.0) {
  return detail::join_segments(contour_segments(f, part, level), level);
}

inline std::vector<ContourSet> epsilon_contours(const ScalarField& field, const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw InvalidArgument("epsilon_pseudospectrum: eps list is empty");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0)) throw InvalidArgument("epsilon_pseudospectrum: eps values must be positive");
    if (k > 0 && !(eps_list[k] > eps_list[k - 1])) {
      throw InvalidArgument("epsilon_pseudospectrum: eps values must be strictly ascending");
    }
  }
  std::vector<ContourSet> out;
  for (double eps : eps_list) out.push_back(extract_contours(field, eps));
  return out;
}

inline std::vector<ContourSet> epsilon_pseudospectrum(const ParametricOperator& op, const Grid2D& grid,
                                                      const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw InvalidArgument("epsilon_pseudospectrum: eps list is empty");
  return epsilon_contours(compute_sigma_field(op, grid), eps_list);
}

// ---------------------------------------------------------------------------
// Borderline regions

/// Semi-axes of the exclusion ellipse around each flutter point.
struct ExclusionRadius {
  double dU = 0.0;
  double dchi_R = 0.0;

  static ExclusionRadius default_for(const Grid2D& g) {
    return {0.05 * (g.u_axis.max - g.u_axis.min), 0.05 * (g.w_axis.max - g.w_axis.min)};
  }
};

/// Connected components (4-connectivity) of {sigma < threshold}, ordered by
/// their first node in row-major order.
inline std::vector<BorderlineRegion> find_borderline_regions(const ScalarField& field, double threshold,
                                                             const std::vector<Point2>& flutter_points,
                                                             std::optional<ExclusionRadius> exclusion = std::nullopt) {
  if (!(threshold > 0.0)) throw InvalidArgument("find_borderline_regions: threshold must be positive");
  const ExclusionRadius ex = exclusion.value_or(ExclusionRadius::default_for(field.grid));
  const auto& g = field.grid;
  const int nu = g.u_axis.count, nw = g.w_axis.count;
  Eigen::MatrixXi label = Eigen::MatrixXi::Constant(nu, nw, -1);
  std::vector<BorderlineRegion> regions;
  std::vector<std::pair<int, int>> stack;

  for (int i0 = 0; i0 < nu; ++i0) {
    for (int j0 = 0; j0 < nw; ++j0) {
      if (label(i0, j0) >= 0 || !(field.values(i0, j0) < threshold)) continue;
      const int id = static_cast<int>(regions.size());
      BorderlineRegion r;
      r.min_sigma = INFINITY;
      r.extent = {g.u(i0), g.u(i0), g.w(j0), g.w(j0)};
      stack.assign(1, {i0, j0});
      label(i0, j0) = id;
      while (!stack.empty()) {
        const auto [i, j] = stack.back();
        stack.pop_back();
        ++r.node_count;
        const double v = field.values(i, j);
        if (v < r.min_sigma) {
          r.min_sigma = v;
          r.center = {g.u(i), g.w(j)};
        }
        r.extent.u_min = std::min(r.extent.u_min, g.u(i));
        r.extent.u_max = std::max(r.extent.u_max, g.u(i));
        r.extent.chi_r_min = std::min(r.extent.chi_r_min, g.w(j));
        r.extent.chi_r_max = std::max(r.extent.chi_r_max, g.w(j));
        const std::array<std::pair<int, int>, 4> nb{{{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}}};
        for (auto [a, b] : nb) {
          if (a < 0 || b < 0 || a >= nu || b >= nw) continue;
          if (label(a, b) >= 0 || !(field.values(a, b) < threshold)) continue;
          label(a, b) = id;
          stack.emplace_back(a, b);
        }
      }
      r.near_flutter = false;
      for (const auto& fp : flutter_points) {
        const double du = ex.dU > 0 ? (r.center.U - fp.U) / ex.dU : (r.center.U == fp.U ? 0.0 : INFINITY);
        const double dw = ex.dchi_R > 0 ? (r.center.chi_R - fp.chi_R) / ex.dchi_R
                                        : (r.center.chi_R == fp.chi_R ? 0.0 : INFINITY);
        if (du * du + dw * dw <= 1.0) r.near_flutter = true;
      }
      regions.push_back(r);
    }
  }
  return regions;
}

}  // namespace flutterspec
