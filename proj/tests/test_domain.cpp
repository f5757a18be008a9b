#include <catch2/catch_amalgamated.hpp>

#include "polyscal/domain.hpp"

using namespace polyscal;

namespace {

PolyhedralDomain unit_cube() { return make_unit_cube_prism(); }

PolyhedralDomain square_cone() {
  return make_cone({{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}, Vec3(0, 0, 1));
}

// Cube rotated 45 degrees about z; its vertical edges see the anisotropy of a
// diagonal metric, an axis-aligned cube would not.
PolyhedralDomain diamond_cube() {
  const double r = std::sqrt(0.5);
  return make_prism({{r, 0}, {0, r}, {-r, 0}, {0, -r}}, 1.0, Vec3(0, 0, 1));
}

}  // namespace

TEST_CASE("domain validation") {
  CHECK_THROWS_AS(make_cone({{0, 0}, {1, 0}}, Vec3(0, 0, 1)), Error);          // k < 3
  CHECK_THROWS_AS(make_cone({{0, 0}, {0, 1}, {1, 0}}, Vec3(0, 0, 1)), Error);  // clockwise
  CHECK_THROWS_AS(make_cone({{0, 0}, {1, 0}, {1, 1}}, Vec3(0.5, 0.5, 0)), Error);  // apex in plane
  CHECK_THROWS_AS(make_prism({{0, 0}, {1, 0}, {1, 1}}, -1.0, Vec3(0, 0, 1)), Error);
  CHECK_NOTHROW(square_cone().validate());
}

TEST_CASE("model angles of the unit cube") {
  const ModelAngles m = model_angles(unit_cube());
  for (int j = 0; j < 4; ++j) {
    CHECK(m.gamma[j] == Catch::Approx(kPi / 2).margin(1e-14));
    CHECK(m.theta_side[j] == Catch::Approx(kPi / 2).margin(1e-14));
    CHECK(m.alpha_base[j] == Catch::Approx(kPi / 2).margin(1e-14));
  }
}

TEST_CASE("model angles of the cone over the unit square") {
  const ModelAngles m = model_angles(square_cone());
  const double atan2v = std::atan(2.0);
  for (int j = 0; j < 4; ++j) {
    CHECK(m.gamma[j] == Catch::Approx(atan2v).margin(1e-14));
    CHECK(m.theta_side[j] == Catch::Approx(std::acos(-0.2)).margin(1e-13));
  }
  CHECK(atan2v == Catch::Approx(1.1071487177940904));
}

TEST_CASE("frustum prism angles match the normal-vector oracle") {
  const auto P = make_prism({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}, 0.5, Vec3(0, 0, 1));
  const ModelAngles m = model_angles(P);
  // brute-force oracle: angle between face planes from their unit normals
  for (int j = 0; j < 4; ++j) {
    const Face side = P.side_face(j);
    const Face base = P.base_face();
    const double between = angle_between(side.normal, base.normal);
    CHECK(m.gamma[j] == Catch::Approx(kPi - between).margin(1e-13));
  }
  CHECK(m.gamma[0] == Catch::Approx(std::atan(2.0)).margin(1e-13));
}

TEST_CASE("base interior angle deficit sums to 2 pi") {
  const auto P = make_cone({{0, 0}, {2, 0}, {2.5, 1.2}, {1.0, 2.3}, {-0.7, 1.1}},
                           Vec3(0.8, 0.9, 1.3));
  const ModelAngles m = model_angles(P);
  double sum = 0.0;
  for (double a : m.alpha_base) sum += kPi - a;
  CHECK(sum == Catch::Approx(2.0 * kPi).margin(1e-12));
}

TEST_CASE("model angles are scale invariant") {
  auto P = square_cone();
  ModelAngles m1 = model_angles(P);
  for (auto& v : P.base) v *= 37.5;
  P.apex *= 37.5;
  ModelAngles m2 = model_angles(P);
  for (int j = 0; j < 4; ++j) {
    CHECK(m1.gamma[j] == Catch::Approx(m2.gamma[j]).margin(1e-12));
    CHECK(m1.theta_side[j] == Catch::Approx(m2.theta_side[j]).margin(1e-12));
    CHECK(m1.alpha_base[j] == Catch::Approx(m2.alpha_base[j]).margin(1e-12));
  }
}

TEST_CASE("dihedral angles in the metric") {
  const Box3 box{Vec3(-3, -3, -1), Vec3(3, 3, 2)};

  SECTION("flat cube edges are right angles at every parameter") {
    const auto P = unit_cube();
    const auto f = make_flat(box);
    for (double s : {0.1, 0.5, 0.9})
      for (int j = 0; j < 4; ++j)
        CHECK(dihedral_angle(P, f, j, s) == Catch::Approx(kPi / 2).margin(1e-13));
  }

  SECTION("conformal metrics preserve every dihedral angle") {
    const auto P = square_cone();
    const auto f = make_conformal_gaussian(0.2, 1.0, box, Vec3(0.1, -0.2, 0.3));
    const ModelAngles m = model_angles(P);
    for (int j = 0; j < 4; ++j)
      CHECK(dihedral_angle(P, f, j, 0.37) == Catch::Approx(m.theta_side[j]).margin(1e-10));
  }

  SECTION("diagonal anisotropy shifts the angle off pi/2 on the rotated cube") {
    const auto P = diamond_cube();
    const auto f = make_diag_perturb(0.1, box);
    const double th = dihedral_angle(P, f, 0, 0.5);
    CHECK(std::abs(th - kPi / 2) > 1e-3);

    // independent oracle: two-vector g-inner-product computation from the
    // exact edge frame
    const LateralEdge e = P.lateral_edge(0);
    const Vec3 x = e.point(0.5);
    const Mat3 G = f.eval(x);
    const Vec3 t = e.dir();
    auto conormal = [&](int fid) {
      Vec3 w = P.side_face(fid).centroid() - x;
      w -= (w.dot(G * t) / t.dot(G * t)) * t;
      return w;
    };
    const Vec3 w1 = conormal(e.face_prev), w2 = conormal(e.face_next);
    const double oracle = std::acos(
        clamp_cos(w1.dot(G * w2) / std::sqrt(w1.dot(G * w1) * w2.dot(G * w2))));
    CHECK(th == Catch::Approx(oracle).margin(1e-12));
  }
}

TEST_CASE("hypothesis checks") {
  const Box3 box{Vec3(-3, -3, -1), Vec3(3, 3, 2)};
  const auto f = make_flat(box);

  SECTION("flat cube satisfies the edge bound and the one-sided condition") {
    const auto rep = check_hypotheses(unit_cube(), f);
    CHECK(rep.angle_bound_ok);
    CHECK(rep.gamma_one_sided);
    for (const auto& e : rep.edges) {
      CHECK(e.lower_bound == Catch::Approx(0.0).margin(1e-14));
      CHECK(e.lower_ok);
    }
  }

  SECTION("cone over the square has all gamma below pi/2") {
    const auto rep = check_hypotheses(square_cone(), f);
    CHECK(rep.angle_bound_ok);
    CHECK(rep.gamma_one_sided);
    for (double g : rep.gamma) CHECK(g < kPi / 2);
  }

  SECTION("mixed gamma override fails the one-sided condition") {
    const auto rep = check_hypotheses(unit_cube(), f, {0.3, 2.9, 0.3, 2.9});
    CHECK_FALSE(rep.gamma_one_sided);
  }
}

TEST_CASE("face mean curvature") {
  const Box3 box{Vec3(-3, -3, -2), Vec3(3, 3, 2)};

  SECTION("planar faces are minimal in the flat metric") {
    const auto P = unit_cube();
    const auto f = make_flat(box);
    for (int id = 0; id < P.face_count(); ++id) {
      const Face face = P.face(id);
      CHECK(std::abs(face_mean_curvature(P, f, face, face.centroid())) < 1e-10);
    }
  }

  SECTION("conformal face curvature matches the 4 u^-3 du/dn oracle") {
    // cube centered at the origin, face x = 0.5
    const auto P = make_prism({{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}, 1.0,
                              Vec3(0, 0, 1));
    const double eps = 0.1;
    auto f = make_conformal_gaussian(eps, 1.0, box);
    f.h_fd = 1e-3;
    const Face face = P.side_face(1);  // x = 0.5 face
    REQUIRE(face.normal.isApprox(Vec3(1, 0, 0), 1e-12));
    const Vec3 x(0.5, 0.1, 0.4);
    const double r2 = x.squaredNorm();
    const double u = 1.0 + eps * std::exp(-r2);
    const double du_dn = eps * std::exp(-r2) * (-2.0 * x.x());  // d/dx of u
    const double oracle = 4.0 * du_dn / (u * u * u);
    CHECK(face_mean_curvature(P, f, face, x) == Catch::Approx(oracle).epsilon(2e-5));
  }

  SECTION("area-variation oracle under the diagonal metric") {
    const auto P = unit_cube();
    const auto f = make_diag_perturb(0.1, box);
    const Face face = P.side_face(0);  // y = 0 face
    const Vec3 x(0.45, 0.0, 0.55);
    const double H = face_mean_curvature(P, f, face, x);

    // push a small patch along the g-unit outward normal and difference areas
    const double half = 0.02, dt = 1e-4;
    auto patch_area = [&](double t) {
      const int n = 8;
      double area = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          auto corner = [&](double a, double b) {
            Vec3 p = x + Vec3((a - 0.5) * 2 * half, 0.0, (b - 0.5) * 2 * half);
            return Vec3(p + t * face_unit_normal_g(f, face, p));
          };
          const double a0 = double(i) / n, a1 = double(i + 1) / n;
          const double b0 = double(j) / n, b1 = double(j + 1) / n;
          const Vec3 p00 = corner(a0, b0), p10 = corner(a1, b0), p01 = corner(a0, b1),
                     p11 = corner(a1, b1);
          const Vec3 c = 0.25 * (p00 + p10 + p01 + p11);
          const Mat3 G = f.eval_raw(c);
          const Vec3 e1 = 0.5 * (p10 - p00 + p11 - p01);
          const Vec3 e2 = 0.5 * (p01 - p00 + p11 - p10);
          area += std::sqrt(e1.dot(G * e1) * e2.dot(G * e2) - std::pow(e1.dot(G * e2), 2));
        }
      return area;
    };
    const double a0 = patch_area(0.0);
    const double dA = (patch_area(dt) - patch_area(-dt)) / (2.0 * dt);
    CHECK(dA / a0 == Catch::Approx(H).epsilon(0.02));
  }

  SECTION("stencil clipping") {
    const auto P = unit_cube();
    auto f = make_flat(Box3{Vec3(-0.001, -1, -1), Vec3(1.001, 2, 2)});
    f.h_fd = 0.01;
    f.dg = nullptr;
    f.d2g = nullptr;
    const Face face = P.side_face(3);  // x = 0 face
    CHECK_THROWS_AS(face_mean_curvature(P, f, face, Vec3(0, 0.5, 0.5)), Error);
  }
}
