#pragma once

// shared builders for the test suites

#include <functional>

#include "polyscal/domain.hpp"
#include "polyscal/metric_field.hpp"
#include "polyscal/surface_mesh.hpp"

namespace polyscal::testing {

inline PolyhedralDomain unit_cube_domain() { return make_unit_cube_prism(); }

inline PolyhedralDomain square_cone_domain() {
  return make_cone({{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}, Vec3(0, 0, 1));
}

// structured graph mesh over the unit square inside the unit cube,
// z = zfun(x, y); boundary tags follow the cube face numbering
inline TriSurface structured_graph_mesh(int n,
                                        const std::function<double(double, double)>& zfun) {
  TriSurface S;
  S.corners.assign(4, -1);
  auto id = [n](int i, int j) { return i * (n + 1) + j; };
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double x = double(i) / n, y = double(j) / n;
      S.V.emplace_back(x, y, zfun(x, y));
      VertexTag t;  // faces: 0: y=0, 1: x=1, 2: y=1, 3: x=0
      const bool x0 = (i == 0), x1 = (i == n), y0 = (j == 0), y1 = (j == n);
      if (x1 && y0) t = {VertexTag::Kind::OnEdge, 0};
      else if (x1 && y1) t = {VertexTag::Kind::OnEdge, 1};
      else if (x0 && y1) t = {VertexTag::Kind::OnEdge, 2};
      else if (x0 && y0) t = {VertexTag::Kind::OnEdge, 3};
      else if (y0) t = {VertexTag::Kind::OnFace, 0};
      else if (x1) t = {VertexTag::Kind::OnFace, 1};
      else if (y1) t = {VertexTag::Kind::OnFace, 2};
      else if (x0) t = {VertexTag::Kind::OnFace, 3};
      S.tags.push_back(t);
      if (x1 && y0) S.corners[0] = id(i, j);
      if (x1 && y1) S.corners[1] = id(i, j);
      if (x0 && y1) S.corners[2] = id(i, j);
      if (x0 && y0) S.corners[3] = id(i, j);
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      S.F.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      S.F.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return S;
}

// conformal factor varying in (x, y) only: horizontal planes stay minimal and
// meet vertical faces at right angles
inline MetricField make_conformal_xy(double eps, const Box3& box,
                                     const Vec2& center = Vec2(0.2, 0.35)) {
  MetricField f;
  f.name = "conformal_xy";
  f.box = box;
  f.h_fd = 1e-3;
  auto u_all = [eps, center](const Vec3& x, double& u, Vec3& du, Mat3& d2u) {
    const Vec2 d(x.x() - center.x(), x.y() - center.y());
    const double e = eps * std::exp(-d.squaredNorm());
    u = 1.0 + e;
    du = Vec3(-2.0 * d.x() * e, -2.0 * d.y() * e, 0.0);
    d2u = Mat3::Zero();
    d2u(0, 0) = e * (4.0 * d.x() * d.x() - 2.0);
    d2u(1, 1) = e * (4.0 * d.y() * d.y() - 2.0);
    d2u(0, 1) = d2u(1, 0) = e * 4.0 * d.x() * d.y();
  };
  f.g = [u_all](const Vec3& x) {
    double u;
    Vec3 du;
    Mat3 d2;
    u_all(x, u, du, d2);
    return Mat3(std::pow(u, 4) * Mat3::Identity());
  };
  f.dg = [u_all](const Vec3& x) {
    double u;
    Vec3 du;
    Mat3 d2;
    u_all(x, u, du, d2);
    std::array<Mat3, 3> out;
    for (int k = 0; k < 3; ++k) out[k] = 4.0 * std::pow(u, 3) * du[k] * Mat3::Identity();
    return out;
  };
  f.d2g = [u_all](const Vec3& x) {
    double u;
    Vec3 du;
    Mat3 d2;
    u_all(x, u, du, d2);
    std::array<Mat3, 9> out;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        out[3 * k + l] =
            (12.0 * u * u * du[k] * du[l] + 4.0 * std::pow(u, 3) * d2(k, l)) * Mat3::Identity();
    return out;
  };
  return f;
}

inline double conformal_xy_u(double eps, const Vec3& x,
                             const Vec2& center = Vec2(0.2, 0.35)) {
  const Vec2 d(x.x() - center.x(), x.y() - center.y());
  return 1.0 + eps * std::exp(-d.squaredNorm());
}

}  // namespace polyscal::testing
