// flutterspec command-line front end.
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flutterspec.hpp"

namespace fs = flutterspec;

namespace {

struct Overrides {
  std::string config;
  std::string output;
  std::optional<double> u_min, u_max, chi_r_min, chi_r_max;
  std::string grid;
  std::vector<double> eps;
  std::optional<double> threshold;
  std::optional<double> ds, max_ds, min_ds;
  std::optional<int> max_steps;
  std::optional<int> direction;
  std::optional<std::size_t> start;
  std::string corrector;
  std::optional<double> u_start, u_end, du;
  std::optional<double> zeta_max;
  std::string path;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config,-c", o.config, "run configuration (JSON)");
  sub->add_option("--output,-o", o.output, "output directory");
}

void add_window(CLI::App* sub, Overrides& o) {
  sub->add_option("--u-min", o.u_min);
  sub->add_option("--u-max", o.u_max);
  sub->add_option("--chi-r-min", o.chi_r_min);
  sub->add_option("--chi-r-max", o.chi_r_max);
}

void add_continuation(CLI::App* sub, Overrides& o) {
  sub->add_option("--ds", o.ds);
  sub->add_option("--max-ds", o.max_ds);
  sub->add_option("--min-ds", o.min_ds);
  sub->add_option("--max-steps", o.max_steps);
  sub->add_option("--corrector", o.corrector)->check(CLI::IsMember({"slp", "newton"}));
}

fs::cli::RunConfig resolve(const Overrides& o) {
  fs::cli::RunConfig c;
  if (!o.config.empty()) c = fs::cli::load_config(o.config);
  if (!o.output.empty()) c.output_dir = o.output;
  if (o.u_min || o.u_max || o.chi_r_min || o.chi_r_max) {
    fs::ParameterWindow w = c.window ? *c.window : fs::cli::build_model(c).window();
    if (o.u_min) w.u_min = *o.u_min;
    if (o.u_max) w.u_max = *o.u_max;
    if (o.chi_r_min) w.chi_r_min = *o.chi_r_min;
    if (o.chi_r_max) w.chi_r_max = *o.chi_r_max;
    c.window = w;
  }
  if (!o.grid.empty()) {
    const auto x = o.grid.find('x');
    try {
      c.grid_u = std::stoi(o.grid.substr(0, x));
      c.grid_chi_r = x == std::string::npos ? c.grid_u : std::stoi(o.grid.substr(x + 1));
    } catch (const std::exception&) {
      throw fs::InvalidArgument("--grid expects N or NUxNW");
    }
  }
  if (!o.eps.empty()) c.eps = o.eps;
  if (o.threshold) c.threshold = *o.threshold;
  if (o.ds) c.continuation.ds = *o.ds;
  if (o.max_ds) c.continuation.max_ds = *o.max_ds;
  if (o.min_ds) c.continuation.min_ds = *o.min_ds;
  if (o.max_steps) c.continuation.max_steps = *o.max_steps;
  if (o.corrector == "newton") c.continuation.corrector = fs::CorrectorKind::Newton;
  if (o.corrector == "slp") c.continuation.corrector = fs::CorrectorKind::Slp;
  if (o.direction) c.direction = *o.direction;
  if (o.start) {
    c.start.flutter_index = *o.start;
    c.start.point.reset();
  }
  if (o.u_start) c.u_start = *o.u_start;
  if (o.u_end) c.u_end = *o.u_end;
  if (o.du) c.du = *o.du;
  if (o.zeta_max) c.zeta_max = *o.zeta_max;
  if (!o.path.empty()) c.path_file = o.path;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudospectral flutter analysis: flutter points, pseudospectra, damping paths, envelopes"};
  app.require_subcommand(1);
  Overrides o;

  auto* flutter = app.add_subcommand("flutter", "locate flutter points");
  add_common(flutter, o);
  add_window(flutter, o);

  auto* pseudo = app.add_subcommand("pseudo", "sigma_min field, eps contours and borderline regions");
  add_common(pseudo, o);
  add_window(pseudo, o);
  pseudo->add_option("--grid", o.grid, "N or NUxNW");
  pseudo->add_option("--eps", o.eps, "ascending eps levels");
  pseudo->add_option("--threshold", o.threshold, "borderline threshold (default: largest eps)");

  auto* trace = app.add_subcommand("trace", "pseudo-arclength damping path from a flutter point");
  add_common(trace, o);
  add_window(trace, o);
  add_continuation(trace, o);
  trace->add_option("--direction", o.direction, "+1 marches into the stable side first, -1 the other way")
      ->check(CLI::IsMember({-1, 1}));
  trace->add_option("--start", o.start, "flutter point index");

  auto* envelope = app.add_subcommand("envelope", "zeta = zeta_max crossings along a path CSV");
  add_common(envelope, o);
  envelope->add_option("--path", o.path, "path CSV (s,U,chi_R,chi_I,zeta,residual)");
  envelope->add_option("--zeta-max", o.zeta_max);

  auto* damping = app.add_subcommand("damping-plot", "natural continuation in U");
  add_common(damping, o);
  add_window(damping, o);
  damping->add_option("--u-start", o.u_start);
  damping->add_option("--u-end", o.u_end);
  damping->add_option("--du", o.du);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : fs::cli::kError;
  }

  try {
    const fs::cli::RunConfig c = resolve(o);
    if (*flutter) return fs::cli::cmd_flutter(c);
    if (*pseudo) return fs::cli::cmd_pseudo(c);
    if (*trace) return fs::cli::cmd_trace(c);
    if (*envelope) return fs::cli::cmd_envelope(c);
    if (*damping) return fs::cli::cmd_damping_plot(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fs::cli::kError;
  }
  return fs::cli::kError;
}
