#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "polyscal/capillary_solver.hpp"

using namespace polyscal;

namespace {

PolyhedralDomain unit_cube() { return make_unit_cube_prism(); }

PolyhedralDomain square_cone() {
  return make_cone({{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}, Vec3(0, 0, 1));
}

const Box3 kBox{Vec3(-3, -3, -2), Vec3(3, 3, 3)};

// smooth interior bump that vanishes on the square boundary
double bump(double x, double y) {
  return std::sin(kPi * x) * std::sin(kPi * y);
}

TriSurface perturbed_slice(const PolyhedralDomain& P, double t, double h, double amp) {
  TriSurface S = build_slice_mesh(P, t, h);
  const double zscale = P.top_height();
  for (int v = 0; v < S.nv(); ++v) {
    // vertical motion keeps cube faces and vertical edges satisfied
    const double x = S.V[v].x(), y = S.V[v].y();
    S.V[v].z() += amp * zscale * bump(x, y);
  }
  return S;
}

}  // namespace

TEST_CASE("energy of planar slices") {
  const auto flat = make_flat(kBox);

  SECTION("flat cube with right angles: wetted terms vanish") {
    const auto P = unit_cube();
    for (double t : {0.25, 0.5, 0.8})
      CHECK(energy(P, build_slice_mesh(P, t, 0.25), flat) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("flat cone with model angles: slices have zero energy") {
    const auto P = square_cone();
    const TriSurface S = build_slice_mesh(P, 0.5, 0.125);
    CHECK(std::abs(energy(P, S, flat)) < 1e-12);
  }

  SECTION("flat cube with gamma pi/3 at height t") {
    // wetted area is the part of the side faces above the slice: F = 2t - 1
    const auto P = unit_cube();
    const std::vector<double> gamma(4, kPi / 3);
    for (double t : {0.3, 0.5, 0.7}) {
      const TriSurface S = build_slice_mesh(P, t, 0.25);
      CHECK(energy(P, S, flat, gamma) == Catch::Approx(2.0 * t - 1.0).margin(1e-12));
    }
  }

  SECTION("non-separating surface is rejected") {
    const auto P = unit_cube();
    TriSurface S = build_slice_mesh(P, 0.5, 0.25);
    for (auto& v : S.V) v.z() += 4.0;
    CHECK_THROWS_MATCHES(energy(P, S, flat), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::NotAdmissible;
                         }));
  }
}

TEST_CASE("energy scaling covariance") {
  // scaling domain and surface by L multiplies the flat energy by L^2
  const double L = 2.5;
  const auto P1 = unit_cube();
  const auto P2 = make_prism({{0, 0}, {L, 0}, {L, L}, {0, L}}, 1.0, Vec3(0, 0, L));
  const auto flat = make_flat(Box3{Vec3(-3, -3, -3), Vec3(3 * L, 3 * L, 3 * L)});
  const std::vector<double> gamma(4, 1.1);
  const TriSurface S1 = build_slice_mesh(P1, 0.4, 0.25);
  TriSurface S2 = build_slice_mesh(P2, 0.4, 0.25 * L);
  const double F1 = energy(P1, S1, flat, gamma);
  const double F2 = energy(P2, S2, flat, gamma);
  CHECK(F2 == Catch::Approx(L * L * F1).epsilon(1e-12));
}

TEST_CASE("energy report recomposition identity") {
  const auto P = square_cone();
  const auto flat = make_flat(kBox);
  const TriSurface S = build_slice_mesh(P, 0.4, 0.125);
  const EnergyReport rep = make_energy_report(P, S, flat);
  double recomposed = rep.area;
  for (int j = 0; j < 4; ++j) recomposed -= std::cos(rep.gamma[j]) * rep.wetted[j];
  CHECK(rep.energy == Catch::Approx(recomposed).margin(1e-12));
}

TEST_CASE("obstacle clearances") {
  const auto P = unit_cube();
  const TriSurface S = build_slice_mesh(P, 0.5, 0.25);
  const Clearances c = obstacle_check(P, S);
  CHECK(c.base == Catch::Approx(0.5).margin(1e-12));
  CHECK(c.far == Catch::Approx(0.5).margin(1e-12));

  const auto Q = square_cone();
  const TriSurface T = build_slice_mesh(Q, 0.25, 0.125);
  const Clearances cq = obstacle_check(Q, T);
  CHECK(cq.base == Catch::Approx(0.25).margin(1e-12));
  // nearest vertex to the apex is the slice center at height 0.25
  CHECK(cq.far == Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("minimize on the flat cube flattens a bump") {
  const auto P = unit_cube();
  const auto flat = make_flat(kBox);
  const double h = 1.0 / 8.0;
  const TriSurface init = perturbed_slice(P, 0.5, h, 0.2);

  SolverOptions opts;
  opts.max_iterations = 20000;
  const MinimizeResult res = minimize(P, flat, init, opts);
  CHECK(res.report.converged);
  CHECK(res.report.energy >= 1.0 - 1e-12);
  CHECK(res.report.energy < 1.005);
  CHECK(res.report.h_inf < 0.05);
  CHECK(res.report.max_angle_residual < 0.02);
  CHECK(res.report.clearance_base >= 0.1);

  SECTION("converged surface is planar") {
    // best-fit plane deviation below 2 h^2
    Vec3 c = Vec3::Zero();
    for (const auto& v : res.surface.V) c += v;
    c /= res.surface.nv();
    Mat3 cov = Mat3::Zero();
    for (const auto& v : res.surface.V) cov += (v - c) * (v - c).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 n = eig.eigenvectors().col(0);
    double dev = 0.0;
    for (const auto& v : res.surface.V) dev = std::max(dev, std::abs((v - c).dot(n)));
    CHECK(dev < 2.0 * h * h);
  }

  SECTION("first variation certificate") {
    const double tol = opts.tol_rel * P.scale();
    const double delta = 1e-6;
    std::mt19937 rng(11);
    const std::vector<double> gamma(4, kPi / 2);
    const double F0 = energy(P, res.surface, flat, gamma);
    for (int trial = 0; trial < 5; ++trial) {
      int v = std::uniform_int_distribution<int>(0, res.surface.nv() - 1)(rng);
      while (res.surface.tags[v].kind != VertexTag::Kind::Interior)
        v = std::uniform_int_distribution<int>(0, res.surface.nv() - 1)(rng);
      const int c = std::uniform_int_distribution<int>(0, 2)(rng);
      TriSurface S2 = res.surface;
      S2.V[v][c] += delta;
      CHECK(std::abs(energy(P, S2, flat, gamma) - F0) < 2.0 * tol * delta +
                                                            1e-15);
    }
  }
}

TEST_CASE("minimize on the flat cone stays near zero energy") {
  const auto P = square_cone();
  const auto flat = make_flat(kBox);
  const double h = 1.0 / 8.0;
  TriSurface init = build_slice_mesh(P, 0.5, h);
  // radial perturbation keeps the constraints
  std::mt19937 rng(3);
  for (int v = 0; v < init.nv(); ++v) {
    if (init.tags[v].kind != VertexTag::Kind::Interior) continue;
    init.V[v] += 0.05 * bump(init.V[v].x() * 2 + 0.5, init.V[v].y() * 2 + 0.5) *
                 (P.apex - init.V[v]);
  }
  SolverOptions opts;
  opts.max_iterations = 20000;
  const MinimizeResult res = minimize(P, flat, init, opts);
  CHECK(std::abs(res.report.energy) < 5e-3);
}

TEST_CASE("minimize aborts on obstacle contact") {
  const auto P = unit_cube();
  const auto flat = make_flat(kBox);
  const TriSurface touching = build_slice_mesh(P, 0.02, 0.25);
  CHECK_THROWS_MATCHES(minimize(P, flat, touching, {}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::ObstacleContact;
                       }));
}

TEST_CASE("infimum probe verdicts") {
  const auto flat = make_flat(kBox);

  SECTION("flat cone with model angles sits at zero") {
    const auto P = square_cone();
    const InfimumProbe probe = infimum_probe(P, flat, {0.3, 0.5, 0.7}, 0.125, {}, false);
    CHECK(probe.verdict == "zero");
  }

  SECTION("energy angles below the slice angles make it negative") {
    const auto P = square_cone();
    SolverOptions opts;
    opts.gamma = model_angles(P).gamma;
    for (double& g : opts.gamma) g -= 0.1;
    const InfimumProbe probe = infimum_probe(P, flat, {0.3, 0.5, 0.7}, 0.125, opts, false);
    CHECK(probe.verdict == "negative");
  }

  SECTION("flat cube with right angles is positive") {
    const auto P = unit_cube();
    const InfimumProbe probe = infimum_probe(P, flat, {0.5}, 0.25, {}, false);
    CHECK(probe.verdict == "positive");
    CHECK(probe.min_energy >= 1.0 - 1e-12);
  }
}
