#include <catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace flutterspec;
using fixtures::relerr;

namespace {

double cond2(const Eigen::MatrixXd& t) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t);
  return svd.singularValues()(0) / svd.singularValues()(t.rows() - 1);
}

void check_derivatives(const ParametricOperator& op, std::uint32_t seed) {
  std::mt19937 rng(seed);
  const auto w = op.window();
  std::uniform_real_distribution<double> du(w.u_min, w.u_max), dr(w.chi_r_min, w.chi_r_max), di(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const double U = du(rng), cr = dr(rng), ci = di(rng);
    const auto a = param_derivatives(op, cr, ci, U);
    const auto f = finite_difference_derivatives(op, cr, ci, U);
    CHECK(fixtures::frob_relerr(f.d_chi_r, a.d_chi_r) <= 1e-5);
    CHECK(fixtures::frob_relerr(f.d_chi_i, a.d_chi_i) <= 1e-5);
    CHECK(fixtures::frob_relerr(f.d_u, a.d_u) <= 1e-5);
  }
}

oracle::Pencil oracle_pencil(const QuadraticPencil& p) { return {p.M, p.K, p.D, p.E}; }

}  // namespace

// ---------------------------------------------------------------------------
// Trajectory

TEST_CASE("single constant mode is singular exactly on its line", "[models][trajectory]") {
  TrajectorySpec s;
  s.modes.push_back({Polynomial{{50.0}}, Polynomial{{0.0}}});
  const auto op = build_trajectory_operator(s);
  for (double U : {0.0, 10.0, 377.0, 800.0}) {
    CHECK(sigma_min(op, {50.0, 0.0}, U).sigma == 0.0);
    CHECK(sigma_min(op, {50.0, 0.25}, U).sigma == Catch::Approx(0.25));
    CHECK(sigma_min(op, {49.0, 0.0}, U).sigma == Catch::Approx(1.0));
  }
}

TEST_CASE("reference spec matches the factored closed form", "[models][trajectory]") {
  const auto spec = reference_restabilization_spec();
  REQUIRE(spec.modes.size() == 2);
  for (double U = 0.0; U <= 800.0; U += 12.5) {
    CHECK(std::abs(spec.modes[0].omega(U) - oracle::omega1(U)) <= 1e-12);
    CHECK(std::abs(spec.modes[0].g(U) - oracle::g1(U)) <= 1e-10 * (1.0 + std::abs(oracle::g1(U))));
  }
  CHECK(spec.modes[0].g(120.0) == Catch::Approx(0.0).margin(1e-12));
  const auto [u1, u2] = oracle::g1_stationary_points();
  CHECK(u1 > 120.0);
  CHECK(u2 > 120.0);
  CHECK(u2 < 700.0);
  CHECK(std::abs(spec.modes[0].g.derivative()(u2)) <= 1e-12);
  CHECK(oracle::g1(u2) < 0.0);
  CHECK(oracle::g1(u2) > -0.1);
}

TEST_CASE("mixing preserves eigenvalue trajectories", "[models][trajectory][property]") {
  for (double angle : {0.0, 0.3, 1.1, 2.5}) {
    const auto op = fixtures::rotated_trajectory(angle);
    Eigen::MatrixXd T(2, 2);
    T << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    const double c = cond2(T);
    for (double U = 0.0; U <= 800.0; U += 25.0) {
      CHECK(sigma_min(op, {oracle::omega1(U), oracle::g1(U)}, U).sigma <= 1e-10 * c);
      CHECK(sigma_min(op, {150.0, 5.0}, U).sigma <= 1e-10 * c);
    }
  }
  // A non-orthogonal but well-conditioned mixing.
  TrajectorySpec s = reference_restabilization_spec();
  Eigen::MatrixXd T(2, 2);
  T << 2.0, 1.0, 0.5, 3.0;
  s.mixing = T;
  const auto op = build_trajectory_operator(s);
  for (double U = 0.0; U <= 800.0; U += 50.0) {
    CHECK(sigma_min(op, {oracle::omega1(U), oracle::g1(U)}, U).sigma <= 1e-10 * cond2(T));
  }
}

TEST_CASE("trajectory construction errors", "[models][trajectory]") {
  TrajectorySpec s = reference_restabilization_spec();
  Eigen::MatrixXd T(2, 2);
  T << 1.0, 0.0, 0.0, 1e-3;
  s.mixing = T;
  CHECK_THROWS_AS(build_trajectory_operator(s), InvalidArgument);
  s.mixing = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(build_trajectory_operator(s), InvalidArgument);
  CHECK_THROWS_AS(build_trajectory_operator(TrajectorySpec{}), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Typical section

TEST_CASE("typical section at zero airspeed", "[models][typical]") {
  const TypicalSectionSpec spec;
  const auto op = build_typical_section(spec);
  const auto p = typical_section_matrices(spec);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(p.K, p.M);
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double w = std::sqrt(ges.eigenvalues()(k));
    for (double sgn : {1.0, -1.0}) {
      const CMatrix a = evaluate(op, sgn * w, 0.0);
      CHECK(std::abs(a.determinant()) <= 1e-10 * a.norm() * a.norm());
      CHECK(sigma_min(op, sgn * w, 0.0).sigma <= 1e-10 * a.norm());
    }
  }
  // Natural frequencies are real: the pencil oracle sees no damping at U = 0.
  for (const auto& c : oracle::pencil_chis(oracle::default_typical_section(), 0.0)) {
    CHECK(std::abs(c.imag()) <= 1e-9 * std::abs(c));
  }
}

TEST_CASE("typical section matrices follow the quasi-steady definition", "[models][typical]") {
  TypicalSectionSpec s;
  const auto op = build_typical_section(s);
  const auto o = oracle::default_typical_section();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dr(-40.0, 40.0), di(-5.0, 5.0), du(0.0, 30.0);
  for (int k = 0; k < 50; ++k) {
    const cdouble chi{dr(rng), di(rng)};
    const double U = du(rng);
    const Eigen::MatrixXcd ref = -chi * chi * o.M.cast<cdouble>() + kI * chi * U * o.D.cast<cdouble>() +
                                 o.K.cast<cdouble>() + U * U * o.E.cast<cdouble>();
    CHECK(fixtures::frob_relerr(evaluate(op, chi, U), ref) <= 1e-14);
  }
}

TEST_CASE("typical section reflection symmetry", "[models][typical][property]") {
  // Real coefficients with an i chi term: A(-conj chi, U) = conj A(chi, U),
  // so the spectrum is symmetric under chi -> -conj chi.
  const auto op = build_typical_section(TypicalSectionSpec{});
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> dr(-40.0, 40.0), di(-5.0, 5.0), du(0.0, 30.0);
  for (int k = 0; k < 50; ++k) {
    const cdouble chi{dr(rng), di(rng)};
    const double U = du(rng);
    CHECK(fixtures::frob_relerr(evaluate(op, -std::conj(chi), U), evaluate(op, chi, U).conjugate()) <= 1e-15);
    CHECK(std::abs(sigma_min(op, -std::conj(chi), U).sigma - sigma_min(op, chi, U).sigma) <=
          1e-12 * evaluate(op, chi, U).norm());
  }
  // At zero airspeed the pencil is real in chi^2, so conj(chi) works as well.
  const cdouble chi{17.0, 2.0};
  CHECK(fixtures::frob_relerr(evaluate(op, std::conj(chi), 0.0), evaluate(op, chi, 0.0).conjugate()) <= 1e-15);
}

TEST_CASE("typical section validation", "[models][typical]") {
  TypicalSectionSpec s;
  s.m = 0.0;
  CHECK_THROWS_AS(build_typical_section(s), InvalidArgument);
  s = {};
  s.S = 1.0;  // m I_a - S^2 = 0.8 - 1 < 0
  CHECK_THROWS_AS(build_typical_section(s), InvalidArgument);
  s = {};
  s.rho = -1.0;
  CHECK_THROWS_AS(build_typical_section(s), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Normal operator

TEST_CASE("normal operator", "[models][normal]") {
  CHECK(sigma_min(build_normal_operator({{0.0, 0.0}}), 3.0, 0.0).sigma == Catch::Approx(3.0).epsilon(1e-15));
  const auto op = build_normal_operator({{1.0, 1.0}, {4.0, 0.0}});
  CHECK(sigma_min(op, 1.0, 0.0).sigma == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(sigma_min(op, 1.0, 123.0).sigma == sigma_min(op, 1.0, 0.0).sigma);
  CHECK(op.window().chi_r_min == 0.0);
  CHECK(op.window().chi_r_max == 5.0);
  CHECK_THROWS_AS(build_normal_operator({}), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Galerkin wing

TEST_CASE("cantilever roots", "[models][galerkin]") {
  const auto r = cantilever_roots(4);
  const auto o = oracle::clamped_free_roots(4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(r[k] - o[k]) <= 1e-10);
  CHECK(r[0] == Catch::Approx(1.8751040687).epsilon(1e-9));
}

TEST_CASE("Galerkin wing without aerodynamics recovers beam frequencies", "[models][galerkin]") {
  for (int nmodes : {2, 3}) {
    GalerkinWingSpec s;
    s.rho = 0.0;
    s.x_theta = 0.0;
    s.n_bending = nmodes;
    s.n_torsion = nmodes;
    const auto p = galerkin_wing_matrices(s);
    CHECK(p.D.norm() == 0.0);
    CHECK(p.E.norm() == 0.0);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(p.K, p.M);
    std::vector<double> got;
    for (Eigen::Index k = 0; k < ges.eigenvalues().size(); ++k) got.push_back(std::sqrt(ges.eigenvalues()(k)));
    std::vector<double> want;
    const auto roots = oracle::clamped_free_roots(nmodes);
    for (double r : roots) want.push_back(oracle::bending_frequency(r, s.EI, s.m, s.span));
    for (int j = 0; j < nmodes; ++j) want.push_back(oracle::torsion_frequency(j, s.GJ, s.I_a, s.span));
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(relerr(got[k], want[k]) <= 1e-2);

    // Flutter-free: every eigenvalue of the undamped pencil is real.
    const auto op = build_galerkin_wing(s);
    for (const auto& c : oracle::pencil_chis(oracle_pencil(p), 80.0)) CHECK(std::abs(c.imag()) <= 1e-8 * std::abs(c));
    CHECK(find_flutter_points(op, op.window()).points.empty());
  }
}

TEST_CASE("Galerkin wing with one bending and one torsion mode", "[models][galerkin]") {
  GalerkinWingSpec s;
  s.n_bending = 1;
  s.n_torsion = 1;
  const auto op = build_galerkin_wing(s);
  const auto pen = oracle::beam_wing_1x1(s.EI, s.GJ, s.m, s.I_a, s.span, s.x_theta, s.e, s.rho, s.b, s.C_La);
  const auto lib = galerkin_wing_matrices(s);
  CHECK(fixtures::frob_relerr(lib.M.cast<cdouble>(), pen.M.cast<cdouble>()) <= 1e-9);
  CHECK(fixtures::frob_relerr(lib.K.cast<cdouble>(), pen.K.cast<cdouble>()) <= 1e-9);

  const auto o = oracle::first_flutter(pen, s.window.u_min, s.window.u_max);
  REQUIRE(o);
  const auto fr = find_flutter_points(op, op.window());
  REQUIRE(fr.points.size() >= 1);
  CHECK(relerr(fr.points[0].point.U, o->U) <= 1e-6);
  CHECK(relerr(fr.points[0].point.chi_R, o->chi_R) <= 1e-6);
}

TEST_CASE("Galerkin wing flutter speed converges with mode count", "[models][galerkin]") {
  GalerkinWingSpec s;
  const auto op2 = build_galerkin_wing(s);
  const auto f2 = find_flutter_points(op2, op2.window());
  REQUIRE_FALSE(f2.points.empty());
  const auto o2 = oracle::first_flutter(oracle_pencil(galerkin_wing_matrices(s)), s.window.u_min, s.window.u_max);
  REQUIRE(o2);
  CHECK(relerr(f2.points[0].point.U, o2->U) <= 1e-6);

  s.n_bending = 4;
  s.n_torsion = 4;
  const auto op4 = build_galerkin_wing(s);
  const auto f4 = find_flutter_points(op4, op4.window());
  REQUIRE_FALSE(f4.points.empty());
  CHECK(relerr(f4.points[0].point.U, f2.points[0].point.U) <= 2e-2);
}

TEST_CASE("Galerkin wing validation", "[models][galerkin]") {
  GalerkinWingSpec s;
  s.n_torsion = 0;
  CHECK_THROWS_AS(build_galerkin_wing(s), InvalidArgument);
  s = {};
  s.EI = -1.0;
  CHECK_THROWS_AS(build_galerkin_wing(s), InvalidArgument);
  s = {};
  s.x_theta = 1.0;  // m I_a < (m x_theta)^2
  CHECK_THROWS_AS(build_galerkin_wing(s), InvalidArgument);
}

// ---------------------------------------------------------------------------

TEST_CASE("analytic derivatives of every fixture pass the finite-difference check", "[models][property]") {
  check_derivatives(fixtures::reference_trajectory(), 1);
  check_derivatives(fixtures::rotated_trajectory(), 2);
  check_derivatives(build_typical_section(TypicalSectionSpec{}), 3);
  check_derivatives(build_normal_operator({{1.0, 0.3}, {2.5, -0.2}}), 4);
  check_derivatives(build_galerkin_wing(GalerkinWingSpec{}), 5);
}
