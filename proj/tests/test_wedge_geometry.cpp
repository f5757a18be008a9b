#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "polyscal/wedge_geometry.hpp"

using namespace polyscal;

namespace {

PolyhedralDomain square_cone() {
  return make_cone({{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}, Vec3(0, 0, 1));
}

// Brute-force corner angle: build the three planes, intersect, measure the
// angle between the two cut lines.
double corner_angle_brute(double g1, double g2, double theta) {
  const Wedge w = Wedge::canonical(theta);
  const Vec3 nu = plane_from_contact_angles(w, g1, g2);
  Vec3 l1 = nu.cross(w.nu1);
  Vec3 l2 = nu.cross(w.nu2);
  // orient both cut lines into the wedge interior
  if (l1.dot(w.bisector()) < 0) l1 = -l1;
  if (l2.dot(w.bisector()) < 0) l2 = -l2;
  return angle_between(l1, l2);
}

}  // namespace

TEST_CASE("angle window endpoints") {
  auto w = angle_window(kPi / 2, kPi / 2);
  CHECK(w.lo == Catch::Approx(0.0).margin(1e-15));
  CHECK(w.hi == Catch::Approx(kPi).margin(1e-15));

  w = angle_window(kPi / 3, kPi / 3);
  CHECK(w.lo == Catch::Approx(kPi / 3).margin(1e-15));
  CHECK(w.hi == Catch::Approx(kPi).margin(1e-15));

  w = angle_window(kPi / 4, 3 * kPi / 4);
  CHECK(w.lo == Catch::Approx(0.0).margin(1e-15));
  CHECK(w.hi == Catch::Approx(kPi / 2).margin(1e-15));

  CHECK_THROWS_AS(angle_window(0.0, 1.0), Error);
  CHECK_THROWS_AS(angle_window(1.0, kPi), Error);
}

TEST_CASE("plane from contact angles") {
  SECTION("right wedge, right contact angles: the edge direction itself") {
    const Wedge w = Wedge::canonical(kPi / 2);
    const Vec3 nu = plane_from_contact_angles(w, kPi / 2, kPi / 2);
    CHECK(nu.isApprox(Vec3(0, 0, 1), 1e-12));
  }

  SECTION("pi/3 contact angles on a right wedge, verified by reconstruction") {
    const Wedge w = Wedge::canonical(kPi / 2);
    // transversality margin: |cos th + cos g1 cos g2| = 1/4 < 3/4 = sin g1 sin g2
    CHECK(std::abs(std::cos(kPi / 2) + 0.25) == Catch::Approx(0.25));
    const Vec3 nu = plane_from_contact_angles(w, kPi / 3, kPi / 3);
    const auto meas = measure_contact_angles(w, nu);
    CHECK(meas[0] == Catch::Approx(kPi / 3).margin(1e-12));
    CHECK(meas[1] == Catch::Approx(kPi / 3).margin(1e-12));
    CHECK(nu.norm() == Catch::Approx(1.0).margin(1e-14));
    CHECK(nu.dot(w.edge) > 0.0);
  }

  SECTION("window endpoint is tangential") {
    const Wedge w = Wedge::canonical(kPi / 3);
    CHECK_THROWS_MATCHES(plane_from_contact_angles(w, kPi / 3, kPi / 3), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::Tangential;
                         }));
  }

  SECTION("outside the window there is no solution") {
    const Wedge w = Wedge::canonical(0.5);
    CHECK_THROWS_MATCHES(plane_from_contact_angles(w, kPi / 3, kPi / 3), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::NoSolution;
                         }));
  }

  SECTION("wedge invariant nu1.nu2 = -cos theta") {
    for (double th : {0.3, 1.1, 2.2, 3.0}) {
      const Wedge w = Wedge::canonical(th);
      CHECK(w.nu1.dot(w.nu2) == Catch::Approx(-std::cos(th)).margin(1e-14));
    }
  }
}

TEST_CASE("existence matches the window against brute-force normal sampling") {
  std::mt19937 rng(4211);
  std::uniform_real_distribution<double> U(0.05, kPi - 0.05);
  for (int trial = 0; trial < 40; ++trial) {
    const double g1 = U(rng), g2 = U(rng), th = U(rng);
    const Wedge w = Wedge::canonical(th);
    const AngleWindow win = angle_window(g1, g2);
    if (std::abs(th - win.lo) < 1e-3 || std::abs(th - win.hi) < 1e-3) continue;

    bool solved = true;
    try {
      plane_from_contact_angles(w, g1, g2);
    } catch (const Error&) {
      solved = false;
    }
    CHECK(solved == win.contains(th));

    // coarse sampling confirmation
    bool found = false;
    std::mt19937 rng2(99 + trial);
    std::normal_distribution<double> N(0, 1);
    for (int i = 0; i < 20000 && !found; ++i) {
      Vec3 v(N(rng2), N(rng2), N(rng2));
      v.normalize();
      if (std::abs(v.dot(w.nu1) - std::cos(g1)) < 2e-2 &&
          std::abs(v.dot(w.nu2) - std::cos(g2)) < 2e-2)
        found = true;
    }
    if (win.contains(th)) CHECK(found);
  }
}

TEST_CASE("corner angle closed form") {
  CHECK(corner_angle(kPi / 2, kPi / 2, kPi / 2) == Catch::Approx(kPi / 2).margin(1e-14));
  CHECK(corner_angle(kPi / 3, kPi / 3, kPi / 2) ==
        Catch::Approx(std::acos(1.0 / 3.0)).margin(1e-14));
  CHECK(std::acos(1.0 / 3.0) == Catch::Approx(1.23096).margin(1e-5));
  CHECK(corner_angle(kPi / 2, kPi / 2, 0.7) == Catch::Approx(0.7).margin(1e-14));
  CHECK_THROWS_AS(corner_angle(kPi / 3, kPi / 3, 0.5), Error);
}

TEST_CASE("corner angle equals the brute-force line construction") {
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> U(0.05, kPi - 0.05);
  int tested = 0;
  while (tested < 50) {
    const double g1 = U(rng), g2 = U(rng), th = U(rng);
    const AngleWindow win = angle_window(g1, g2);
    if (!win.contains(th) || th - win.lo < 1e-3 || win.hi - th < 1e-3) continue;
    ++tested;
    CHECK(corner_angle(g1, g2, th) == Catch::Approx(corner_angle_brute(g1, g2, th)).margin(1e-10));
  }
}

TEST_CASE("corner angle is monotone in the wedge opening") {
  CHECK(corner_angle_monotonicity_check(kPi / 2, kPi / 2, 0.5, 1.0));
  CHECK(corner_angle(kPi / 2, kPi / 2, 0.5) == Catch::Approx(0.5));
  CHECK(corner_angle(kPi / 2, kPi / 2, 1.0) == Catch::Approx(1.0));
  CHECK(corner_angle_monotonicity_check(kPi / 3, kPi / 3, 1.2, 1.5));

  std::mt19937 rng(777);
  std::uniform_real_distribution<double> U(0.05, kPi - 0.05);
  int tested = 0;
  while (tested < 2000) {
    const double g1 = U(rng), g2 = U(rng);
    const AngleWindow win = angle_window(g1, g2);
    if (win.empty()) continue;
    std::uniform_real_distribution<double> T(win.lo + 1e-6, win.hi - 1e-6);
    double a = T(rng), b = T(rng);
    ++tested;
    CHECK(corner_angle_monotonicity_check(g1, g2, a, b));
  }

  SECTION("finite-difference slope is positive across the window") {
    const double g1 = 1.1, g2 = 0.7;
    const AngleWindow win = angle_window(g1, g2);
    for (int i = 1; i < 100; ++i) {
      const double th = win.lo + (win.hi - win.lo) * i / 100.0;
      const double d = 1e-6 * (win.hi - win.lo);
      if (th - d <= win.lo || th + d >= win.hi) continue;
      CHECK(corner_angle(g1, g2, th + d) > corner_angle(g1, g2, th - d));
    }
  }
}

TEST_CASE("cone slice identity") {
  const auto P = square_cone();

  SECTION("model angles: residual vanishes exactly") {
    for (double c : {0.25, 0.5, 0.75}) {
      const auto r = cone_slice_identity(P, c);
      CHECK(std::abs(r.residual) < 1e-12);
    }
  }

  SECTION("angles substituted below the model make the energy strictly negative") {
    const ModelAngles m = model_angles(P);
    std::vector<double> gamma = m.gamma;
    for (double& g : gamma) g -= 0.1;
    const auto r = cone_slice_identity(P, 0.5, gamma);
    CHECK(r.residual < -1e-3);
  }

  SECTION("angles substituted above the model make it positive") {
    const ModelAngles m = model_angles(P);
    std::vector<double> gamma = m.gamma;
    for (double& g : gamma) g += 0.1;
    const auto r = cone_slice_identity(P, 0.5, gamma);
    CHECK(r.residual > 1e-3);
  }

  SECTION("plane outside the cone") {
    CHECK_THROWS_MATCHES(cone_slice_identity(P, 2.0), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::EmptySlice;
                         }));
  }

  SECTION("off-center apex still satisfies the identity") {
    const auto Q = make_cone({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, Vec3(0.9, 0.2, 0.7));
    const auto r = cone_slice_identity(Q, 0.3);
    CHECK(std::abs(r.residual) < 1e-12);
  }
}

TEST_CASE("slice contact plane agrees with the wedge construction") {
  // at a lateral edge of the model cone, the base-parallel plane is the one
  // the wedge solver returns for the model contact angles
  const auto P = square_cone();
  const ModelAngles m = model_angles(P);
  const LateralEdge e = P.lateral_edge(0);
  Wedge w;
  w.theta = m.theta_side[0];
  w.edge = e.dir();
  w.nu1 = P.side_face(e.face_prev).normal;
  w.nu2 = P.side_face(e.face_next).normal;
  w.dir1 = P.side_face(e.face_prev).centroid() - e.point(0.5);
  w.dir2 = P.side_face(e.face_next).centroid() - e.point(0.5);
  const Vec3 nu = plane_from_contact_angles(w, m.gamma[0], m.gamma[1]);
  CHECK(nu.isApprox(Vec3(0, 0, 1), 1e-10));
}
