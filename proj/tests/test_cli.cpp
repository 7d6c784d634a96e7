#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace flutterspec;
using io::json;
namespace fsys = std::filesystem;

namespace {

struct Run {
  int code;
  std::string err;
};

fsys::path scratch(const std::string& name) {
  const auto d = fsys::temp_directory_path() / ("flutterspec_cli_" + name);
  fsys::remove_all(d);
  fsys::create_directories(d);
  return d;
}

Run run(const std::string& args, const fsys::path& dir) {
  const auto errf = dir / "stderr.txt";
  const std::string cmd = std::string(FLUTTERSPEC_CLI_PATH) + " " + args + " 2> " + errf.string() + " > /dev/null";
  const int st = std::system(cmd.c_str());
  const int code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return {code, fsys::exists(errf) ? io::read_file(errf) : std::string()};
}

std::string config(const std::string& name) { return std::string(FLUTTERSPEC_CONFIG_DIR) + "/" + name; }

fsys::path write_config(const fsys::path& dir, const json& j) {
  const auto p = dir / "config.json";
  io::write_file(p, j.dump(2));
  return p;
}

const json kTrajectory = json::parse(R"({"kind": "trajectory", "preset": "reference_restabilization"})");

io::CsvTable read_csv(const fsys::path& p) { return io::parse_csv(io::read_file(p)); }

std::string first_line(const fsys::path& p) {
  const std::string t = io::read_file(p);
  return t.substr(0, t.find('\n'));
}

}  // namespace

TEST_CASE("flutter subcommand", "[cli]") {
  const auto dir = scratch("flutter");
  auto r = run("flutter -c " + config("trajectory.json") + " -o " + dir.string(), dir);
  REQUIRE(r.code == 0);
  const json j = json::parse(io::read_file(dir / "flutter_points.json"));
  REQUIRE(j["points"].size() == 1);
  CHECK(fixtures::relerr(j["points"][0]["U"].get<double>(), 120.0) <= 1e-6);

  r = run("flutter -c " + config("normal.json") + " -o " + dir.string(), dir);
  CHECK(r.code == 3);
  CHECK(json::parse(io::read_file(dir / "flutter_points.json"))["points"].empty());

  io::write_file(dir / "broken.json", "{\"model\": ");
  r = run("flutter -c " + (dir / "broken.json").string() + " -o " + dir.string(), dir);
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());

  CHECK(run("flutter -c " + (dir / "absent.json").string(), dir).code == 1);
  CHECK(run("nonsense", dir).code == 1);
  CHECK(run("--help", dir).code == 0);
}

TEST_CASE("pseudo subcommand", "[cli]") {
  const auto dir = scratch("pseudo");
  const auto idc = write_config(dir, {{"model", {{"kind", "identity"}}}, {"grid", 11}, {"eps", {0.5}}});
  auto r = run("pseudo -c " + idc.string() + " -o " + dir.string(), dir);
  REQUIRE(r.code == 0);
  CHECK(io::read_file(dir / "contours.csv") == "eps,polyline_id,vertex_id,U,chi_R\n");
  CHECK(first_line(dir / "sigma_field.csv") == "U,chi_R,sigma_min");
  CHECK(read_csv(dir / "sigma_field.csv").rows.size() == 121);

  r = run("pseudo -c " + config("normal.json") + " -o " + dir.string() + " --eps 0.1 0.2", dir);
  REQUIRE(r.code == 0);
  const auto ct = read_csv(dir / "contours.csv");
  CHECK(ct.header == std::vector<std::string>{"eps", "polyline_id", "vertex_id", "U", "chi_R"});
  std::size_t n01 = 0, n02 = 0;
  for (const auto& row : ct.rows) (row[0] == 0.1 ? n01 : n02)++;
  CHECK(n01 > 0);
  CHECK(n02 > 0);
  // Nested: every 0.1 vertex on the chi_I = 0 slice lies inside the 0.2 set.
  const std::vector<std::complex<double>> eigs{{1.0, 0.05}, {2.5, -0.02}, {4.0, 0.12}};
  for (const auto& row : ct.rows) {
    if (row[0] != 0.1) continue;
    CHECK(oracle::distance_to_spectrum(eigs, {row[4], 0.0}) < 0.2);
  }

  r = run("pseudo -c " + config("trajectory.json") + " -o " + dir.string(), dir);
  REQUIRE(r.code == 0);
  const json b = json::parse(io::read_file(dir / "borderline.json"));
  REQUIRE(b["regions"].size() == 1);
  CHECK(b["regions"][0]["near_flutter"] == false);
  CHECK(std::abs(b["regions"][0]["center"]["U"].get<double>() - oracle::g1_stationary_points().second) <= 10.0);

  CHECK(run("pseudo -c " + config("normal.json") + " -o " + dir.string() + " --eps 0.2 0.1", dir).code == 1);
  CHECK(run("pseudo -c " + config("normal.json") + " -o " + dir.string() + " --grid 1", dir).code == 1);
}

TEST_CASE("trace subcommand", "[cli]") {
  const auto dir = scratch("trace");
  const std::string base = "trace -c " + config("trajectory.json") + " -o " + dir.string();
  auto r = run(base + " --max-steps 0", dir);
  REQUIRE(r.code == 0);
  CHECK(read_csv(dir / "path.csv").rows.size() == 1);

  r = run(base, dir);
  REQUIRE(r.code == 0);
  const auto t = read_csv(dir / "path.csv");
  CHECK(t.header == io::path_header());
  REQUIRE(t.rows.size() > 50);
  for (const auto& row : t.rows) {
    CHECK(std::abs(row[2] - oracle::omega1(row[1])) <= 1e-8);
    CHECK(std::abs(row[3] - oracle::g1(row[1])) <= 1e-8);
    CHECK(std::abs(row[4] - row[3] / std::sqrt(row[2] * row[2] + row[3] * row[3])) <= 1e-12);
    CHECK(row[5] <= 1e-10);
  }
  CHECK(t.rows.back()[1] > t.rows.front()[1]);
  const json pj = json::parse(io::read_file(dir / "path.json"));
  CHECK(pj["origin"]["kind"] == "flutter_point");
  CHECK(pj["direction"] == -1);
  CHECK(pj["termination"].is_string());

  // Identical inputs give byte-identical outputs.
  const std::string csv1 = io::read_file(dir / "path.csv"), json1 = io::read_file(dir / "path.json");
  REQUIRE(run(base, dir).code == 0);
  CHECK(io::read_file(dir / "path.csv") == csv1);
  CHECK(io::read_file(dir / "path.json") == json1);

  // Explicit start triple and flag overrides.
  const auto c2 = write_config(dir, {{"model", kTrajectory},
                                     {"trace", {{"start", {{"U", 200.0}, {"chi_R", 50.1}, {"chi_I", -1.0}}}}},
                                     {"continuation", {{"max_steps", 5}}}});
  r = run("trace -c " + c2.string() + " -o " + dir.string() + " --direction 1", dir);
  REQUIRE(r.code == 0);
  const auto t2 = read_csv(dir / "path.csv");
  REQUIRE(t2.rows.size() == 6);
  CHECK(t2.rows[0][1] == 200.0);
  CHECK(std::abs(t2.rows[0][3] - oracle::g1(200.0)) <= 1e-10);

  const auto c3 = write_config(dir, {{"model", kTrajectory},
                                     {"continuation", {{"min_ds", 1e-3}, {"max_corrector_iters", 1}}}});
  CHECK(run("trace -c " + c3.string() + " -o " + dir.string(), dir).code == 2);
  CHECK(run("trace -c " + config("normal.json") + " -o " + dir.string(), dir).code == 3);
  CHECK(run(base + " --start 4", dir).code == 1);
  CHECK(run(base + " --direction 0", dir).code == 1);
  CHECK(run(base + " --ds 2", dir).code == 1);
}

TEST_CASE("damping-plot subcommand", "[cli]") {
  const auto dir = scratch("damping");
  auto r = run("damping-plot -c " + config("trajectory.json") + " -o " + dir.string() + " --du 5", dir);
  REQUIRE(r.code == 0);
  const auto t = read_csv(dir / "path.csv");
  CHECK(t.header == io::path_header());
  REQUIRE(t.rows.size() == 141);
  for (const auto& row : t.rows) CHECK(std::abs(row[3] - oracle::g1(row[1])) <= 1e-8);

  r = run("damping-plot -c " + config("trajectory.json") + " -o " + dir.string() + " --u-end 3 --du 10", dir);
  REQUIRE(r.code == 0);
  const auto two = read_csv(dir / "path.csv");
  REQUIRE(two.rows.size() == 2);
  CHECK(two.rows[0][1] == 0.0);
  CHECK(two.rows[1][1] == 3.0);

  r = run("damping-plot -c " + config("typical_section.json") + " -o " + dir.string(), dir);
  REQUIRE(r.code == 0);
  const auto ts = read_csv(dir / "path.csv");
  const auto o = oracle::first_flutter(oracle::default_typical_section(), 2.0, 30.0);
  REQUIRE(o);
  bool bracketed = false;
  for (std::size_t k = 0; k + 1 < ts.rows.size(); ++k) {
    if (ts.rows[k][3] > 0.0 && ts.rows[k + 1][3] <= 0.0) {
      bracketed = ts.rows[k][1] <= o->U && ts.rows[k + 1][1] >= o->U;
      break;
    }
  }
  CHECK(bracketed);

  const auto noseed = write_config(dir, {{"model", kTrajectory}});
  CHECK(run("damping-plot -c " + noseed.string() + " -o " + dir.string(), dir).code == 1);
}

TEST_CASE("envelope subcommand", "[cli]") {
  const auto dir = scratch("envelope");
  const auto tc = write_config(dir, {{"model", kTrajectory}, {"trace", {{"direction", 1}}}});
  REQUIRE(run("trace -c " + tc.string() + " -o " + dir.string(), dir).code == 0);
  const auto path = (dir / "path.csv").string();

  const auto expect = oracle::zeta1_crossing(0.05, 0.0, 120.0);
  REQUIRE(expect);
  auto r = run("envelope -c " + tc.string() + " -o " + dir.string() + " --path " + path + " --zeta-max 0.05", dir);
  REQUIRE(r.code == 0);
  json j = json::parse(io::read_file(dir / "crossings.json"));
  REQUIRE(j["crossings"].size() == 1);
  CHECK(fixtures::relerr(j["crossings"][0]["U_star"].get<double>(), *expect) <= 1e-6);
  CHECK(j["crossings"][0]["side"] == "subcritical");
  CHECK(j["crossings"][0]["refined"] == true);

  r = run("envelope -c " + tc.string() + " -o " + dir.string() + " --path " + path + " --zeta-max 0", dir);
  REQUIRE(r.code == 0);
  j = json::parse(io::read_file(dir / "crossings.json"));
  REQUIRE(j["crossings"].size() == 1);
  CHECK(std::abs(j["crossings"][0]["U_star"].get<double>() - 120.0) <= 1e-8 * 120.0);

  // Without a model the crossing is interpolated along the path.
  r = run("envelope -o " + dir.string() + " --path " + path + " --zeta-max 0.05", dir);
  REQUIRE(r.code == 0);
  CHECK(json::parse(io::read_file(dir / "crossings.json"))["crossings"][0]["refined"] == false);

  CHECK(run("envelope -o " + dir.string() + " --path " + path + " --zeta-max 0.9", dir).code == 3);
  io::write_file(dir / "junk.csv", "s,U\n1,a\n");
  CHECK(run("envelope -o " + dir.string() + " --path " + (dir / "junk.csv").string(), dir).code == 1);
  CHECK(run("envelope -o " + dir.string(), dir).code == 1);
}
