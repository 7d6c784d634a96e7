#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "flutterspec/continuation.hpp"
#include "flutterspec/errors.hpp"
#include "flutterspec/flutter.hpp"
#include "flutterspec/io.hpp"
#include "flutterspec/pseudospectrum.hpp"

namespace flutterspec::cli {

using io::json;

enum ExitCode : int { kOk = 0, kError = 1, kFirstStep = 2, kEmpty = 3 };

struct TraceStart {
  std::optional<std::size_t> flutter_index;  // default 0 when no triple
  std::optional<EigenPoint> point;
};

struct RunConfig {
  json model;
  std::optional<ParameterWindow> window;
  int grid_u = 101;
  int grid_chi_r = 101;
  double grid_chi_i = 0.0;
  std::vector<double> eps{0.04, 0.08};
  std::optional<double> threshold;
  std::optional<ExclusionRadius> exclusion;
  FlutterSettings flutter;
  ContinuationSettings continuation;
  TraceStart start;
  int direction = 1;
  double u_start = 0.0;
  std::optional<double> u_end;
  double du = 1.0;
  std::optional<EigenPoint> seed;
  double zeta_max = 0.05;
  std::string path_file;
  std::filesystem::path output_dir = ".";
};

namespace detail {

inline EigenPoint triple_from_json(const json& j) {
  EigenPoint p;
  p.U = j.at("U").get<double>();
  p.chi_R = j.at("chi_R").get<double>();
  p.chi_I = j.value("chi_I", 0.0);
  return p;
}

inline void read_continuation(const json& j, ContinuationSettings& c) {
  io::detail::read_opt(j, "ds", c.ds);
  io::detail::read_opt(j, "max_steps", c.max_steps);
  io::detail::read_opt(j, "corrector_tol", c.corrector_tol);
  io::detail::read_opt(j, "max_corrector_iters", c.max_corrector_iters);
  io::detail::read_opt(j, "step_shrink", c.step_shrink);
  io::detail::read_opt(j, "step_grow", c.step_grow);
  io::detail::read_opt(j, "min_ds", c.min_ds);
  io::detail::read_opt(j, "max_ds", c.max_ds);
  if (j.contains("u_scale") || j.contains("chi_scale")) {
    c.scale = ContinuationScale{j.value("u_scale", 1.0), j.value("chi_scale", 1.0)};
  }
  const std::string corr = j.value("corrector", std::string("slp"));
  if (corr == "slp") {
    c.corrector = CorrectorKind::Slp;
  } else if (corr == "newton") {
    c.corrector = CorrectorKind::Newton;
  } else {
    throw InvalidArgument("config: continuation.corrector must be 'slp' or 'newton'");
  }
  const std::string form = j.value("constraint", std::string("absolute"));
  if (form == "absolute") {
    c.constraint = ConstraintForm::Absolute;
  } else if (form == "increment") {
    c.constraint = ConstraintForm::Increment;
  } else {
    throw InvalidArgument("config: continuation.constraint must be 'absolute' or 'increment'");
  }
}

}  // namespace detail

/// Parses a run configuration; relative model/path references resolve
/// against `base_dir`.
inline RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
  RunConfig c;
  try {
    if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
    if (j.contains("model")) {
      const json& m = j.at("model");
      if (m.is_string()) {
        const auto p = base_dir / m.get<std::string>();
        c.model = io::parse_json_text(io::read_file(p), p.string());
      } else {
        c.model = m;
      }
    }
    if (j.contains("window")) c.window = io::detail::window_from_json(j.at("window"));
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      if (g.is_number_integer()) {
        c.grid_u = c.grid_chi_r = g.get<int>();
      } else if (g.is_object()) {
        io::detail::read_opt(g, "u", c.grid_u);
        io::detail::read_opt(g, "chi_r", c.grid_chi_r);
        io::detail::read_opt(g, "chi_i", c.grid_chi_i);
      } else {
        throw InvalidArgument("config: grid must be an integer or {u, chi_r, chi_i}");
      }
    }
    if (j.contains("eps")) c.eps = j.at("eps").get<std::vector<double>>();
    if (j.contains("borderline")) {
      const json& b = j.at("borderline");
      if (b.contains("threshold")) c.threshold = b.at("threshold").get<double>();
      if (b.contains("exclusion")) {
        c.exclusion = ExclusionRadius{b.at("exclusion").at("dU").get<double>(),
                                      b.at("exclusion").at("dchi_R").get<double>()};
      }
    }
    if (j.contains("flutter")) {
      const json& f = j.at("flutter");
      io::detail::read_opt(f, "grid_count", c.flutter.grid_count);
      io::detail::read_opt(f, "refine_iters", c.flutter.refine_iters);
      io::detail::read_opt(f, "tol", c.flutter.tol);
      io::detail::read_opt(f, "max_iters", c.flutter.max_iters);
    }
    if (j.contains("continuation")) detail::read_continuation(j.at("continuation"), c.continuation);
    if (j.contains("trace")) {
      const json& t = j.at("trace");
      if (t.contains("start")) {
        const json& s = t.at("start");
        if (s.is_number_integer()) {
          c.start.flutter_index = s.get<std::size_t>();
        } else {
          c.start.point = detail::triple_from_json(s);
        }
      }
      io::detail::read_opt(t, "direction", c.direction);
    }
    if (j.contains("damping_plot")) {
      const json& d = j.at("damping_plot");
      io::detail::read_opt(d, "u_start", c.u_start);
      if (d.contains("u_end")) c.u_end = d.at("u_end").get<double>();
      io::detail::read_opt(d, "du", c.du);
      if (d.contains("seed")) c.seed = detail::triple_from_json(d.at("seed"));
    }
    if (j.contains("envelope")) {
      const json& e = j.at("envelope");
      io::detail::read_opt(e, "zeta_max", c.zeta_max);
      if (e.contains("path")) c.path_file = (base_dir / e.at("path").get<std::string>()).string();
    }
    if (j.contains("output")) {
      const json& o = j.at("output");
      if (o.is_string()) {
        c.output_dir = o.get<std::string>();
      } else if (o.contains("dir")) {
        c.output_dir = o.at("dir").get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& p) {
  const json j = io::parse_json_text(io::read_file(p), p.string());
  return config_from_json(j, p.has_parent_path() ? p.parent_path() : std::filesystem::path("."));
}

inline ParametricOperator build_model(const RunConfig& c) {
  if (c.model.is_null()) throw InvalidArgument("config: no model given");
  ParametricOperator op = io::model_from_json(c.model);
  if (c.window) op.set_window(*c.window);
  return op;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Commands. Each returns an exit code; diagnostics go to `diag`.

inline int cmd_flutter(const RunConfig& c, std::ostream& diag = std::cerr) {
  const ParametricOperator op = build_model(c);
  const FlutterSearchResult r = find_flutter_points(op, op.window(), c.flutter);
  io::write_file(c.output_dir / "flutter_points.json", dump(io::to_json(r)));
  for (const auto& f : r.failures) {
    diag << "polish failed near U=" << io::format_double(f.candidate.U) << ": " << f.message << "\n";
  }
  return r.points.empty() ? kEmpty : kOk;
}

inline int cmd_pseudo(const RunConfig& c, std::ostream& diag = std::cerr) {
  const ParametricOperator op = build_model(c);
  const Grid2D grid = Grid2D::over(op.window(), c.grid_u, c.grid_chi_r, c.grid_chi_i);
  grid.validate();
  const ScalarField field = compute_sigma_field(op, grid);
  const auto sets = epsilon_contours(field, c.eps);
  io::write_file(c.output_dir / "sigma_field.csv", io::to_csv(io::sigma_field_table(field)));
  io::write_file(c.output_dir / "contours.csv", io::to_csv(io::contour_table(sets)));

  // Borderline regions default to the largest eps level.
  const double threshold = c.threshold.value_or(c.eps.back());
  std::vector<Point2> fps;
  json fjson = json::array();
  try {
    const auto fr = find_flutter_points(op, op.window(), c.flutter);
    for (const auto& p : fr.points) {
      fps.push_back({p.point.U, p.point.chi_R});
      fjson.push_back({{"U", p.point.U}, {"chi_R", p.point.chi_R}});
    }
  } catch (const Error& e) {
    diag << "flutter search for borderline exclusion failed: " << e.what() << "\n";
  }
  const auto regions = find_borderline_regions(field, threshold, fps, c.exclusion);
  json rj = json::array();
  for (const auto& r : regions) rj.push_back(io::to_json(r));
  io::write_file(c.output_dir / "borderline.json",
                 dump({{"threshold", threshold}, {"flutter_points", fjson}, {"regions", rj}}));
  return kOk;
}

inline void write_path(const RunConfig& c, const ModePath& path) {
  io::write_file(c.output_dir / "path.csv", io::to_csv(io::path_table(path)));
  io::write_file(c.output_dir / "path.json", dump(io::to_json(path)));
}

inline int cmd_trace(const RunConfig& c, std::ostream& diag = std::cerr) {
  const ParametricOperator op = build_model(c);
  c.continuation.validate();
  ModePath path;
  try {
    if (c.start.point) {
      const EigenPoint guess = *c.start.point;
      EigenPoint start = make_eigen_point(op, guess.chi_R, guess.chi_I, guess.U);
      if (start.residual > c.continuation.corrector_tol) {
        start = solve_at_fixed_u(op, guess.U, guess, c.continuation.corrector_tol, c.continuation.max_corrector_iters);
      }
      path = trace_path(op, start, c.direction, c.continuation);
    } else {
      const std::size_t idx = c.start.flutter_index.value_or(0);
      const FlutterSearchResult fr = find_flutter_points(op, op.window(), c.flutter);
      if (idx >= fr.points.size()) {
        diag << "no flutter point with index " << idx << " (found " << fr.points.size() << ")\n";
        return fr.points.empty() ? kEmpty : kError;
      }
      path = trace_path(op, fr.points[idx], c.direction, c.continuation);
    }
  } catch (const ContinuationError& e) {
    diag << e.what() << "\n";
    return kFirstStep;
  }
  write_path(c, path);
  diag << "trace: " << path.size() << " points, termination: " << path.termination << "\n";
  return kOk;
}

inline int cmd_damping_plot(const RunConfig& c, std::ostream& diag = std::cerr) {
  const ParametricOperator op = build_model(c);
  if (!c.seed) throw InvalidArgument("config: damping_plot.seed {U, chi_R, chi_I} is required");
  const double u_end = c.u_end.value_or(op.window().u_max);
  ModePath path;
  try {
    path = natural_continuation(op, c.u_start, u_end, c.du, *c.seed, c.continuation.corrector_tol,
                                c.continuation.max_corrector_iters);
  } catch (const ContinuationError& e) {
    diag << e.what() << "\n";
    return kFirstStep;
  }
  write_path(c, path);
  diag << "damping-plot: " << path.size() << " points, termination: " << path.termination << "\n";
  return kOk;
}

/// Crossings of zeta = zeta_max on a path CSV. With a model the crossings are
/// refined by corrector solves; without one they are interpolated.
inline int cmd_envelope(const RunConfig& c, std::ostream& diag = std::cerr) {
  if (c.path_file.empty()) throw InvalidArgument("envelope: no path file given");
  const ModePath path = io::path_from_table(io::parse_csv(io::read_file(c.path_file)));
  if (path.points.empty()) throw InvalidArgument("envelope: path file has no rows");
  std::vector<EnvelopeCrossing> crossings;
  if (!c.model.is_null()) {
    const ParametricOperator op = build_model(c);
    ContinuationSettings s = c.continuation;
    s.scale = path.scale;
    crossings = flight_envelope(op, path, c.zeta_max, s);
  } else {
    crossings = flight_envelope_interpolated(path, c.zeta_max);
  }
  json arr = json::array();
  for (const auto& x : crossings) arr.push_back(io::to_json(x));
  io::write_file(c.output_dir / "crossings.json", dump({{"zeta_max", c.zeta_max}, {"crossings", arr}}));
  diag << "envelope: " << crossings.size() << " crossing(s)\n";
  return crossings.empty() ? kEmpty : kOk;
}

}  // namespace flutterspec::cli
