#pragma once

#include <algorithm>
#include <vector>

#include "polyscal/common.hpp"
#include "polyscal/metric_field.hpp"

namespace polyscal {

// Christoffel symbols only; cheaper than the full curvature stack.
inline std::array<Mat3, 3> christoffel_at(const MetricField& field, const Vec3& x) {
  const Mat3 gi = field.eval(x).inverse();
  const auto dG = field.d1(x);
  std::array<Mat3, 3> gam;
  for (int k = 0; k < 3; ++k) {
    Mat3 m = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int l = 0; l < 3; ++l)
          s += gi(k, l) * (dG[i](j, l) + dG[j](i, l) - dG[l](i, j));
        m(i, j) = 0.5 * s;
      }
    gam[k] = m;
  }
  return gam;
}

// Planar face of the reference polyhedron, stored as a chart.
struct Face {
  std::vector<Vec3> verts;   // ordered polygon in 3-space
  Vec3 normal;               // outward unit normal (flat)
  Vec3 origin;               // chart origin
  Vec3 cu, cv;               // orthonormal in-plane chart basis

  Vec2 to_chart(const Vec3& x) const {
    return Vec2((x - origin).dot(cu), (x - origin).dot(cv));
  }
  Vec3 from_chart(const Vec2& p) const { return origin + p[0] * cu + p[1] * cv; }
  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& v : verts) c += v;
    return c / static_cast<double>(verts.size());
  }
  double area_flat() const {
    double a = 0.0;
    for (size_t i = 1; i + 1 < verts.size(); ++i)
      a += 0.5 * (verts[i] - verts[0]).cross(verts[i + 1] - verts[0]).norm();
    return a;
  }
};

struct LateralEdge {
  Vec3 a, b;            // from base vertex toward apex / top vertex
  int face_prev, face_next;  // the two side faces meeting along this edge
  Vec3 point(double s) const { return a + s * (b - a); }
  Vec3 dir() const { return (b - a).normalized(); }
};

// Euclidean reference angles of the model polyhedron.
struct ModelAngles {
  std::vector<double> gamma;        // base-to-side dihedral at base edge j
  std::vector<double> theta_side;   // side-to-side dihedral along lateral edge j
  std::vector<double> alpha_base;   // base interior angle at the corner of lateral edge j
};

// Cone over a convex base polygon, or prism between two similar polygons.
// The base sits in {z=0} with counterclockwise vertices; all Riemannian
// structure enters through a MetricField evaluated in these coordinates.
struct PolyhedralDomain {
  enum class Kind { Cone, Prism };

  Kind kind = Kind::Cone;
  std::vector<Vec3> base;
  Vec3 apex = Vec3(0, 0, 1);        // cone only
  double top_scale = 1.0;           // prism only
  Vec3 top_offset = Vec3(0, 0, 1);  // prism only
  std::vector<Vec3> top;            // prism only, = s*base + offset

  int num_sides() const { return static_cast<int>(base.size()); }

  double scale() const {
    Vec3 lo = base[0], hi = base[0];
    auto grow = [&](const Vec3& p) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    };
    for (const auto& p : base) grow(p);
    if (kind == Kind::Cone) grow(apex);
    else
      for (const auto& p : top) grow(p);
    return (hi - lo).norm();
  }

  Box3 bounding_box(double pad_rel = 0.0) const {
    Vec3 lo = base[0], hi = base[0];
    auto grow = [&](const Vec3& p) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    };
    for (const auto& p : base) grow(p);
    if (kind == Kind::Cone) grow(apex);
    else
      for (const auto& p : top) grow(p);
    const double pad = pad_rel * (hi - lo).norm();
    return Box3{lo - Vec3::Constant(pad), hi + Vec3::Constant(pad)};
  }

  Vec3 interior_point() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : base) c += p;
    c /= static_cast<double>(base.size());
    const Vec3 t = (kind == Kind::Cone) ? apex : Vec3(top_scale * c + top_offset);
    return 0.5 * (c + t);
  }

  // Height of the reference above the base plane (signed).
  double top_height() const { return (kind == Kind::Cone) ? apex.z() : top_offset.z(); }

  int vertex_count_side_faces() const { return num_sides(); }

  // Side face j spans the base edge (base[j], base[j+1]).
  Face side_face(int j) const {
    const int k = num_sides();
    const int jn = (j + 1) % k;
    Face f;
    if (kind == Kind::Cone)
      f.verts = {base[j], base[jn], apex};
    else
      f.verts = {base[j], base[jn], top[jn], top[j]};
    finish_face(f);
    return f;
  }

  Face base_face() const {
    Face f;
    f.verts = base;
    finish_face(f);
    return f;
  }

  Face top_face() const {
    if (kind != Kind::Prism) fail(ErrorCode::InvalidDomain, "cone has no top face");
    Face f;
    f.verts = top;
    finish_face(f);
    return f;
  }

  // Faces indexed 0..k-1 (sides), k (base), k+1 (top, prism only).
  int face_count() const { return num_sides() + (kind == Kind::Prism ? 2 : 1); }
  Face face(int id) const {
    const int k = num_sides();
    if (id < k) return side_face(id);
    if (id == k) return base_face();
    return top_face();
  }
  int base_face_id() const { return num_sides(); }

  // Lateral edge j = side_face(j) /\ side_face(j+1), rooted at base[j+1].
  LateralEdge lateral_edge(int j) const {
    const int k = num_sides();
    const int v = (j + 1) % k;
    LateralEdge e;
    e.a = base[v];
    e.b = (kind == Kind::Cone) ? apex : top[v];
    e.face_prev = j;
    e.face_next = (j + 1) % k;
    return e;
  }

  void validate() const {
    const int k = num_sides();
    if (k < 3) fail(ErrorCode::InvalidDomain, "base polygon needs at least 3 vertices");
    const double sc = scale();
    const double tol = 1e-12 * sc * sc;
    for (int i = 0; i < k; ++i) {
      if (std::abs(base[i].z()) > 1e-12 * sc)
        fail(ErrorCode::InvalidDomain, "base polygon must lie in the z=0 plane");
      const Vec3 e0 = base[(i + 1) % k] - base[i];
      const Vec3 e1 = base[(i + 2) % k] - base[(i + 1) % k];
      const double cr = e0.x() * e1.y() - e0.y() * e1.x();
      if (cr <= tol)
        fail(ErrorCode::InvalidDomain,
             "base polygon must be strictly convex and counterclockwise");
    }
    if (kind == Kind::Cone) {
      if (std::abs(apex.z()) <= 1e-12 * sc)
        fail(ErrorCode::InvalidDomain, "cone apex must lie off the base plane");
    } else {
      if (top_scale <= 0.0) fail(ErrorCode::InvalidDomain, "prism top_scale must be positive");
      if (std::abs(top_offset.z()) <= 1e-12 * sc)
        fail(ErrorCode::InvalidDomain, "prism top must lie off the base plane");
      if (top.size() != base.size())
        fail(ErrorCode::InvalidDomain, "prism top polygon not derived from base");
    }
    for (int j = 0; j < face_count(); ++j) {
      if (face(j).area_flat() <= tol) fail(ErrorCode::DegenerateFace, "near-zero face area");
    }
  }

 private:
  void finish_face(Face& f) const {
    const Vec3 e1 = f.verts[1] - f.verts[0];
    Vec3 e2 = f.verts[2] - f.verts[0];
    Vec3 n = e1.cross(e2);
    const double nn = n.norm();
    if (nn < 1e-300) fail(ErrorCode::DegenerateFace, "degenerate face");
    n /= nn;
    // orient outward: away from an interior point of the solid
    if (n.dot(f.centroid() - interior_point()) < 0.0) n = -n;
    f.normal = n;
    f.origin = f.verts[0];
    f.cu = e1.normalized();
    f.cv = n.cross(f.cu);
  }
};

inline PolyhedralDomain make_cone(const std::vector<Vec2>& base_xy, const Vec3& apex) {
  PolyhedralDomain P;
  P.kind = PolyhedralDomain::Kind::Cone;
  for (const auto& p : base_xy) P.base.emplace_back(p.x(), p.y(), 0.0);
  P.apex = apex;
  P.validate();
  return P;
}

inline PolyhedralDomain make_prism(const std::vector<Vec2>& base_xy, double top_scale,
                                   const Vec3& top_offset) {
  PolyhedralDomain P;
  P.kind = PolyhedralDomain::Kind::Prism;
  for (const auto& p : base_xy) P.base.emplace_back(p.x(), p.y(), 0.0);
  P.top_scale = top_scale;
  P.top_offset = top_offset;
  for (const auto& p : P.base) P.top.push_back(top_scale * p + top_offset);
  P.validate();
  return P;
}

inline PolyhedralDomain make_unit_cube_prism() {
  return make_prism({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, 1.0, Vec3(0, 0, 1));
}

// ---------------------------------------------------------------------------
// Angles of the Euclidean model
// ---------------------------------------------------------------------------

inline ModelAngles model_angles(const PolyhedralDomain& P) {
  P.validate();
  const int k = P.num_sides();
  ModelAngles m;
  m.gamma.resize(k);
  m.theta_side.resize(k);
  m.alpha_base.resize(k);

  for (int j = 0; j < k; ++j) {
    const int jn = (j + 1) % k;
    // base-to-side dihedral along the base edge, measured through the interior:
    // in-base conormal (left of the CCW edge) against the in-face direction
    // toward the apex / top.
    const Vec3 t = (P.base[jn] - P.base[j]).normalized();
    const Vec3 w_base = Vec3(0, 0, 1).cross(t);
    const Vec3 up = (P.kind == PolyhedralDomain::Kind::Cone) ? P.apex : P.top[j];
    Vec3 w_side = up - P.base[j];
    w_side -= w_side.dot(t) * t;
    const double wn = w_side.norm();
    if (wn < 1e-300) fail(ErrorCode::DegenerateFace, "side face collapses onto base edge");
    m.gamma[j] = angle_between(w_base, w_side / wn);
  }

  for (int j = 0; j < k; ++j) {
    const LateralEdge e = P.lateral_edge(j);
    const Vec3 t = e.dir();
    const Vec3 x = e.point(0.5);
    Vec3 w1 = P.side_face(e.face_prev).centroid() - x;
    Vec3 w2 = P.side_face(e.face_next).centroid() - x;
    w1 -= w1.dot(t) * t;
    w2 -= w2.dot(t) * t;
    if (w1.norm() < 1e-300 || w2.norm() < 1e-300)
      fail(ErrorCode::DegenerateFace, "degenerate lateral edge");
    m.theta_side[j] = angle_between(w1, w2);
  }

  for (int j = 0; j < k; ++j) {
    const int v = (j + 1) % k;
    const Vec3 a = P.base[j] - P.base[v];
    const Vec3 c = P.base[(v + 1) % k] - P.base[v];
    m.alpha_base[j] = angle_between(a, c);
  }
  return m;
}

// Dihedral angle between the two side faces along lateral edge j, measured in
// the metric g at edge parameter s via conormals g-orthogonal to the edge.
inline double dihedral_angle(const PolyhedralDomain& P, const MetricField& field, int j,
                             double s) {
  if (s < 0.0 || s > 1.0) fail(ErrorCode::OutOfDomain, "edge parameter outside [0,1]");
  const LateralEdge e = P.lateral_edge(j);
  const Vec3 x = e.point(s);
  const Mat3 G = field.eval(x);
  const Vec3 t = e.dir();
  const double gtt = t.dot(G * t);
  auto conormal = [&](int face_id) {
    Vec3 w = P.side_face(face_id).centroid() - x;
    w -= (w.dot(G * t) / gtt) * t;
    return w;
  };
  return angle_g(G, conormal(e.face_prev), conormal(e.face_next));
}

struct EdgeHypothesisReport {
  int edge = 0;
  double lower_bound = 0.0;   // |pi - (gamma_j + gamma_{j+1})|
  double upper_bound = 0.0;   // pi - |gamma_j - gamma_{j+1}|
  double min_angle = 0.0;
  double max_angle = 0.0;
  bool lower_ok = false;      // strict lower bound holds everywhere sampled
};

struct HypothesisReport {
  std::vector<EdgeHypothesisReport> edges;
  bool angle_bound_ok = false;       // lower bound on every edge
  bool gamma_one_sided = false;      // all gamma <= pi/2 or all >= pi/2
  std::vector<double> gamma;
};

inline HypothesisReport check_hypotheses(const PolyhedralDomain& P, const MetricField& field,
                                         const std::vector<double>& gamma_override = {},
                                         int samples_per_edge = 9) {
  const int k = P.num_sides();
  const ModelAngles ma = model_angles(P);
  std::vector<double> gamma = gamma_override.empty() ? ma.gamma : gamma_override;
  if (static_cast<int>(gamma.size()) != k)
    fail(ErrorCode::BadConfig, "gamma list length must match face count");

  HypothesisReport rep;
  rep.gamma = gamma;
  rep.angle_bound_ok = true;
  for (int j = 0; j < k; ++j) {
    const int jn = (j + 1) % k;
    EdgeHypothesisReport er;
    er.edge = j;
    er.lower_bound = std::abs(kPi - (gamma[j] + gamma[jn]));
    er.upper_bound = kPi - std::abs(gamma[j] - gamma[jn]);
    er.min_angle = std::numeric_limits<double>::infinity();
    er.max_angle = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples_per_edge; ++i) {
      const double s = (i + 0.5) / samples_per_edge;
      const double th = dihedral_angle(P, field, j, s);
      er.min_angle = std::min(er.min_angle, th);
      er.max_angle = std::max(er.max_angle, th);
    }
    er.lower_ok = er.lower_bound < er.min_angle;
    rep.angle_bound_ok = rep.angle_bound_ok && er.lower_ok;
    rep.edges.push_back(er);
  }
  const double eps = 1e-12;
  bool all_le = true, all_ge = true;
  for (double g : gamma) {
    if (g > kPi / 2 + eps) all_le = false;
    if (g < kPi / 2 - eps) all_ge = false;
  }
  rep.gamma_one_sided = all_le || all_ge;
  return rep;
}

// g-unit outward normal field of a planar face, defined on a neighborhood.
inline Vec3 face_unit_normal_g(const MetricField& field, const Face& f, const Vec3& x) {
  const Mat3 gi = field.eval_raw(x).inverse();
  const Vec3 v = gi * f.normal;
  return v / std::sqrt(f.normal.dot(v));
}

// Mean curvature of face `f` as a hypersurface of (M,g) with respect to the
// outward normal, via central differences of div_g of the unit normal field.
// The flat convention is div of the outward normal, so the unit sphere seen
// from inside has mean curvature 2.
inline double face_mean_curvature(const PolyhedralDomain& P, const MetricField& field,
                                  const Face& f, const Vec3& x) {
  (void)P;
  const double h = field.h_fd;
  if (!field.box.contains(x, 2.0 * h))
    fail(ErrorCode::StencilClipped, "face stencil exits metric box");
  auto flux = [&](const Vec3& y, int k) {
    const Mat3 G = field.eval_raw(y);
    const Vec3 X = face_unit_normal_g(field, f, y);
    return std::sqrt(G.determinant()) * X[k];
  };
  const double sdet = std::sqrt(field.eval_raw(x).determinant());
  double div = 0.0;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    div += (flux(x + e, k) - flux(x - e, k)) / (2.0 * h);
  }
  return div / sdet;
}

// Second fundamental form of the face in direction w (tangent to the face):
// II(w,w) = g(cov deriv of the outward unit normal along w, w). Mean convex
// faces have nonnegative trace.
inline double face_second_fundamental_form(const MetricField& field, const Face& f,
                                           const Vec3& x, const Vec3& w) {
  const double h = field.h_fd;
  if (!field.box.contains(x, 2.0 * h))
    fail(ErrorCode::StencilClipped, "face stencil exits metric box");
  const Vec3 we = w.normalized();
  const Vec3 dX =
      (face_unit_normal_g(field, f, x + h * we) - face_unit_normal_g(field, f, x - h * we)) /
      (2.0 * h) * w.norm();
  const auto gam = christoffel_at(field, x);
  const Vec3 X = face_unit_normal_g(field, f, x);
  Vec3 cov = dX;
  for (int k = 0; k < 3; ++k) cov[k] += w.dot(gam[k] * X);
  return w.dot(field.eval_raw(x) * cov);
}

}  // namespace polyscal
