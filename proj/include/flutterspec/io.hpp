#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "flutterspec/continuation.hpp"
#include "flutterspec/errors.hpp"
#include "flutterspec/flutter.hpp"
#include "flutterspec/models.hpp"
#include "flutterspec/operator.hpp"
#include "flutterspec/pseudospectrum.hpp"

namespace flutterspec::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Numbers and CSV

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  if (v == 0.0) return std::signbit(v) ? "-0" : "0";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  if (r.ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw InvalidArgument("csv: not a number: '" + std::string(s) + "'");
  }
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return k;
    }
    throw InvalidArgument("csv: missing column '" + name + "'");
  }
};

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == sep) {
      out.push_back(line.substr(start, k - start));
      start = k + 1;
    }
  }
  return out;
}

inline std::string csv_row(const std::vector<double>& values) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out += ',';
    out += format_double(values[k]);
  }
  out += '\n';
  return out;
}

inline std::string to_csv(const CsvTable& t) {
  std::string out;
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    if (k) out += ',';
    out += t.header[k];
  }
  out += '\n';
  for (const auto& r : t.rows) out += csv_row(r);
  return out;
}

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto f : split(line)) t.header.emplace_back(f);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != t.header.size()) {
      throw InvalidArgument("csv: line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(t.header.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_double(f));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + p.string() + "'");
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(what + ": malformed JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Field and path tables

inline const std::vector<std::string>& path_header() {
  static const std::vector<std::string> h{"s", "U", "chi_R", "chi_I", "zeta", "residual"};
  return h;
}

inline CsvTable sigma_field_table(const ScalarField& f) {
  CsvTable t{{"U", "chi_R", "sigma_min"}, {}};
  for (int i = 0; i < f.grid.u_axis.count; ++i) {
    for (int j = 0; j < f.grid.w_axis.count; ++j) t.rows.push_back({f.grid.u(i), f.grid.w(j), f.values(i, j)});
  }
  return t;
}

inline CsvTable contour_table(const std::vector<ContourSet>& sets) {
  CsvTable t{{"eps", "polyline_id", "vertex_id", "U", "chi_R"}, {}};
  for (const auto& cs : sets) {
    for (std::size_t p = 0; p < cs.polylines.size(); ++p) {
      for (std::size_t v = 0; v < cs.polylines[p].size(); ++v) {
        const auto& pt = cs.polylines[p][v];
        t.rows.push_back({cs.level, static_cast<double>(p), static_cast<double>(v), pt.U, pt.chi_R});
      }
    }
  }
  return t;
}

inline CsvTable path_table(const ModePath& path) {
  CsvTable t{path_header(), {}};
  for (std::size_t k = 0; k < path.points.size(); ++k) {
    const auto& p = path.points[k];
    t.rows.push_back({path.s[k], p.U, p.chi_R, p.chi_I, zeta_of(p), p.residual});
  }
  return t;
}

/// Rebuilds a path from its CSV. Eigenvectors are not stored; consumers that
/// need them recompute from the operator.
inline ModePath path_from_table(const CsvTable& t) {
  const std::size_t cs = t.column("s"), cu = t.column("U"), cr = t.column("chi_R"), ci = t.column("chi_I"),
                    cres = t.column("residual");
  ModePath path;
  for (const auto& r : t.rows) {
    EigenPoint p;
    p.U = r[cu];
    p.chi_R = r[cr];
    p.chi_I = r[ci];
    p.residual = r[cres];
    path.points.push_back(std::move(p));
    path.s.push_back(r[cs]);
  }
  for (std::size_t k = 1; k < path.s.size(); ++k) {
    if (!(path.s[k] > path.s[k - 1])) throw InvalidArgument("path csv: arclength column must be strictly increasing");
  }
  if (!path.points.empty()) {
    path.scale = ContinuationScale::from_origin(path.points.front());
    path.origin.start = path.points.front();
  }
  return path;
}

// ---------------------------------------------------------------------------
// JSON records

inline json to_json(const ParameterWindow& w) {
  return {{"u_min", w.u_min}, {"u_max", w.u_max}, {"chi_r_min", w.chi_r_min}, {"chi_r_max", w.chi_r_max}};
}

inline json vector_json(const CVector& x) {
  json a = json::array();
  for (Eigen::Index k = 0; k < x.size(); ++k) a.push_back({x(k).real(), x(k).imag()});
  return a;
}

inline json to_json(const EigenPoint& p) {
  return {{"U", p.U}, {"chi_R", p.chi_R}, {"chi_I", p.chi_I}, {"zeta", zeta_of(p)}, {"residual", p.residual}};
}

inline json to_json(const FlutterPoint& fp) {
  json j = to_json(fp.point);
  j["iterations"] = fp.iterations;
  j["static"] = fp.is_static;
  j["eigenvector"] = vector_json(fp.point.x);
  json h = json::array();
  for (const auto& w : fp.window_history) h.push_back(to_json(w));
  j["window_history"] = h;
  return j;
}

inline json to_json(const FlutterSearchResult& r) {
  json pts = json::array(), fails = json::array();
  for (const auto& p : r.points) pts.push_back(to_json(p));
  for (const auto& f : r.failures) {
    fails.push_back({{"U", f.candidate.U}, {"chi_R", f.candidate.chi_R}, {"message", f.message}});
  }
  return {{"points", pts}, {"failures", fails}};
}

inline json to_json(const BorderlineRegion& r) {
  return {{"center", {{"U", r.center.U}, {"chi_R", r.center.chi_R}}},
          {"min_sigma", r.min_sigma},
          {"extent",
           {{"u_min", r.extent.u_min},
            {"u_max", r.extent.u_max},
            {"chi_r_min", r.extent.chi_r_min},
            {"chi_r_max", r.extent.chi_r_max}}},
          {"near_flutter", r.near_flutter},
          {"node_count", r.node_count}};
}

inline json to_json(const ModePath& path) {
  json steps = json::array();
  for (std::size_t k = 0; k < path.step_ds.size(); ++k) steps.push_back(path.step_ds[k]);
  return {{"origin", {{"kind", to_string(path.origin.kind)}, {"start", to_json(path.origin.start)}}},
          {"direction", path.direction},
          {"scale", {{"U", path.scale.u}, {"chi", path.scale.chi}}},
          {"parameterization", "CHI_I"},
          {"points", path.points.size()},
          {"step_ds", steps},
          {"mode_switches", path.mode_switches},
          {"termination", path.termination}};
}

inline json to_json(const EnvelopeCrossing& c) {
  return {{"zeta_max", c.zeta_max},
          {"U_star", c.U_star},
          {"chi_R", c.point.chi_R},
          {"chi_I", c.point.chi_I},
          {"zeta", c.zeta},
          {"bracket", {c.bracket.first, c.bracket.second}},
          {"side", to_string(c.side)},
          {"refined", c.refined}};
}

// ---------------------------------------------------------------------------
// Model specs

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline ParameterWindow window_from_json(const json& j, ParameterWindow w = {}) {
  read_opt(j, "u_min", w.u_min);
  read_opt(j, "u_max", w.u_max);
  read_opt(j, "chi_r_min", w.chi_r_min);
  read_opt(j, "chi_r_max", w.chi_r_max);
  return w;
}

inline cdouble complex_from_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_object()) return {j.value("re", 0.0), j.value("im", 0.0)};
  throw InvalidArgument("model: complex value must be a number, [re, im] or {re, im}");
}

inline TrajectorySpec trajectory_from_json(const json& j) {
  TrajectorySpec s;
  if (j.value("preset", std::string()) == "reference_restabilization") s = reference_restabilization_spec();
  if (j.contains("modes")) {
    s.modes.clear();
    for (const auto& m : j.at("modes")) {
      s.modes.push_back({Polynomial{m.at("omega").get<std::vector<double>>()}, Polynomial{m.at("g").get<std::vector<double>>()}});
    }
  }
  if (j.contains("mixing")) {
    const auto rows = j.at("mixing").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd T(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw InvalidArgument("model: mixing matrix must be square");
      for (std::size_t c = 0; c < rows.size(); ++c) T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    s.mixing = T;
  }
  if (j.contains("window")) s.window = window_from_json(j.at("window"), s.window);
  return s;
}

inline TypicalSectionSpec typical_section_from_json(const json& j) {
  TypicalSectionSpec s;
  read_opt(j, "m", s.m);
  read_opt(j, "S", s.S);
  read_opt(j, "I_a", s.I_a);
  read_opt(j, "k_h", s.k_h);
  read_opt(j, "k_a", s.k_a);
  read_opt(j, "rho", s.rho);
  read_opt(j, "b", s.b);
  read_opt(j, "e", s.e);
  read_opt(j, "C_La", s.C_La);
  if (j.contains("window")) s.window = window_from_json(j.at("window"), s.window);
  return s;
}

inline GalerkinWingSpec galerkin_from_json(const json& j) {
  GalerkinWingSpec s;
  read_opt(j, "EI", s.EI);
  read_opt(j, "GJ", s.GJ);
  read_opt(j, "m", s.m);
  read_opt(j, "I_a", s.I_a);
  read_opt(j, "span", s.span);
  read_opt(j, "x_theta", s.x_theta);
  read_opt(j, "e", s.e);
  read_opt(j, "n_bending", s.n_bending);
  read_opt(j, "n_torsion", s.n_torsion);
  read_opt(j, "rho", s.rho);
  read_opt(j, "b", s.b);
  read_opt(j, "C_La", s.C_La);
  if (j.contains("window")) s.window = window_from_json(j.at("window"), s.window);
  return s;
}

}  // namespace detail

/// Builds an operator from a model object tagged by "kind".
inline ParametricOperator model_from_json(const json& j) {
  try {
    if (!j.is_object()) throw InvalidArgument("model: expected an object");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "trajectory") return build_trajectory_operator(detail::trajectory_from_json(j));
    if (kind == "typical_section") return build_typical_section(detail::typical_section_from_json(j));
    if (kind == "galerkin_wing") return build_galerkin_wing(detail::galerkin_from_json(j));
    if (kind == "normal") {
      std::vector<cdouble> eigs;
      for (const auto& e : j.at("eigenvalues")) eigs.push_back(detail::complex_from_json(e));
      std::optional<ParameterWindow> w;
      if (j.contains("window")) w = detail::window_from_json(j.at("window"));
      return build_normal_operator(eigs, w);
    }
    if (kind == "identity") {
      const int n = j.value("dim", 2);
      if (n < 1) throw InvalidArgument("model: identity dim must be >= 1");
      ParameterWindow w = j.contains("window") ? detail::window_from_json(j.at("window")) : ParameterWindow{0, 1, 0, 1};
      return ParametricOperator(
          "identity", n, [n](cdouble, double) { return CMatrix::Identity(n, n); }, w,
          [n](cdouble, double) {
            const CMatrix z = CMatrix::Zero(n, n);
            return OperatorDerivatives{z, z, z};
          });
    }
    throw InvalidArgument("model: unknown kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model: ") + e.what());
  }
}

}  // namespace flutterspec::io
