#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "polyscal/common.hpp"
#include "polyscal/domain.hpp"
#include "polyscal/metric_field.hpp"

namespace polyscal {

// Sliding constraint of a mesh vertex: free in the interior, 2 dof in a side
// face chart, 1 dof along a lateral edge.
struct VertexTag {
  enum class Kind { Interior, OnFace, OnEdge };
  Kind kind = Kind::Interior;
  int index = -1;
};

// Triangulated separating surface in the reference coordinates of the
// polyhedron. Triangles are oriented so their normals point toward the apex /
// top side (the component the energy encloses).
struct TriSurface {
  std::vector<Vec3> V;
  std::vector<std::array<int, 3>> F;
  std::vector<VertexTag> tags;
  std::vector<int> corners;  // corners[j] = vertex sitting on lateral edge j

  int nv() const { return static_cast<int>(V.size()); }
  int nf() const { return static_cast<int>(F.size()); }

  std::vector<std::vector<int>> vertex_faces() const {
    std::vector<std::vector<int>> vf(V.size());
    for (int f = 0; f < nf(); ++f)
      for (int c = 0; c < 3; ++c) vf[F[f][c]].push_back(f);
    return vf;
  }

  std::vector<std::set<int>> vertex_adjacency() const {
    std::vector<std::set<int>> adj(V.size());
    for (const auto& t : F)
      for (int c = 0; c < 3; ++c) {
        adj[t[c]].insert(t[(c + 1) % 3]);
        adj[t[c]].insert(t[(c + 2) % 3]);
      }
    return adj;
  }

  int edge_count() const {
    std::set<std::pair<int, int>> es;
    for (const auto& t : F)
      for (int c = 0; c < 3; ++c) {
        int a = t[c], b = t[(c + 1) % 3];
        es.insert({std::min(a, b), std::max(a, b)});
      }
    return static_cast<int>(es.size());
  }

  int euler_characteristic() const { return nv() - edge_count() + nf(); }
};

// ---------------------------------------------------------------------------
// Slice meshes and refinement
// ---------------------------------------------------------------------------

// Cross-section polygon at homotopy parameter t in (0,1): corner j sits on
// lateral edge j at (1-t) base + t top/apex.
inline std::vector<Vec3> slice_polygon(const PolyhedralDomain& P, double t) {
  const int k = P.num_sides();
  std::vector<Vec3> poly(k);
  for (int j = 0; j < k; ++j) {
    const LateralEdge e = P.lateral_edge(j);
    poly[j] = (1.0 - t) * e.a + t * e.b;
  }
  return poly;
}

inline TriSurface fan_slice_mesh(const PolyhedralDomain& P, double t) {
  if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::OutOfDomain, "slice parameter outside (0,1)");
  const int k = P.num_sides();
  TriSurface S;
  const auto poly = slice_polygon(P, t);
  Vec3 c = Vec3::Zero();
  for (const auto& p : poly) c += p;
  c /= static_cast<double>(k);
  S.V.push_back(c);
  S.tags.push_back({VertexTag::Kind::Interior, -1});
  for (int j = 0; j < k; ++j) {
    S.V.push_back(poly[j]);
    S.tags.push_back({VertexTag::Kind::OnEdge, j});
    S.corners.push_back(j + 1);
  }
  const bool up = P.top_height() > 0.0;
  for (int j = 0; j < k; ++j) {
    int a = 1 + j, b = 1 + (j + 1) % k;
    if (up)
      S.F.push_back({0, a, b});
    else
      S.F.push_back({0, b, a});
  }
  return S;
}

namespace detail {
// Side faces a tag is allowed to touch; used to propagate tags to midpoints.
inline std::set<int> tag_faces(const VertexTag& t, int k) {
  switch (t.kind) {
    case VertexTag::Kind::Interior:
      return {};
    case VertexTag::Kind::OnFace:
      return {t.index};
    case VertexTag::Kind::OnEdge:
      return {t.index, (t.index + 1) % k};
  }
  return {};
}
}  // namespace detail

// Uniform 4-to-1 refinement with constraint-tag propagation.
inline TriSurface refine(const TriSurface& S, const PolyhedralDomain& P) {
  const int k = P.num_sides();
  TriSurface R;
  R.V = S.V;
  R.tags = S.tags;
  R.corners = S.corners;
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    const int idx = static_cast<int>(R.V.size());
    R.V.push_back(0.5 * (S.V[a] + S.V[b]));
    std::set<int> fa = detail::tag_faces(S.tags[a], k);
    std::set<int> fb = detail::tag_faces(S.tags[b], k);
    std::vector<int> common;
    std::set_intersection(fa.begin(), fa.end(), fb.begin(), fb.end(),
                          std::back_inserter(common));
    VertexTag t;
    if (common.size() == 1) t = {VertexTag::Kind::OnFace, common[0]};
    R.tags.push_back(t);
    mid.emplace(key, idx);
    return idx;
  };
  for (const auto& tri : S.F) {
    const int a = tri[0], b = tri[1], c = tri[2];
    const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
    R.F.push_back({a, ab, ca});
    R.F.push_back({ab, b, bc});
    R.F.push_back({ca, bc, c});
    R.F.push_back({ab, bc, ca});
  }
  return R;
}

// Slice mesh refined until the longest edge is at most h.
inline TriSurface build_slice_mesh(const PolyhedralDomain& P, double t, double h) {
  TriSurface S = fan_slice_mesh(P, t);
  for (int iter = 0; iter < 12; ++iter) {
    double maxe = 0.0;
    for (const auto& tri : S.F)
      for (int c = 0; c < 3; ++c)
        maxe = std::max(maxe, (S.V[tri[c]] - S.V[tri[(c + 1) % 3]]).norm());
    if (maxe <= h) break;
    S = refine(S, P);
  }
  return S;
}

// ---------------------------------------------------------------------------
// Boundary structure
// ---------------------------------------------------------------------------

struct BoundaryLoop {
  std::vector<int> loop;                    // closed cycle of boundary vertices
  std::vector<std::vector<int>> face_chain; // per face j, corner_{j-1} .. corner_j inclusive
  std::vector<int> prev, next;              // neighbors within the loop (-1 off-boundary)
};

inline BoundaryLoop boundary_loop(const TriSurface& S) {
  std::map<std::pair<int, int>, int> count;
  std::map<std::pair<int, int>, std::pair<int, int>> directed;
  for (const auto& t : S.F)
    for (int c = 0; c < 3; ++c) {
      int a = t[c], b = t[(c + 1) % 3];
      count[{std::min(a, b), std::max(a, b)}]++;
      directed[{std::min(a, b), std::max(a, b)}] = {a, b};
    }
  std::vector<int> next(S.V.size(), -1), prev(S.V.size(), -1);
  int start = -1, nbd = 0;
  for (const auto& [key, c] : count) {
    if (c == 1) {
      auto [a, b] = directed.at(key);
      if (next[a] != -1) fail(ErrorCode::NotAdmissible, "non-manifold boundary");
      next[a] = b;
      prev[b] = a;
      start = a;
      ++nbd;
    } else if (c > 2) {
      fail(ErrorCode::NotAdmissible, "edge shared by more than two triangles");
    }
  }
  if (start < 0) fail(ErrorCode::OpenContactCurve, "surface has no boundary");
  BoundaryLoop bl;
  bl.next = next;
  bl.prev = prev;
  int v = start;
  do {
    bl.loop.push_back(v);
    v = next[v];
    if (v < 0 || static_cast<int>(bl.loop.size()) > nbd)
      fail(ErrorCode::OpenContactCurve, "boundary does not close into a single loop");
  } while (v != start);
  if (static_cast<int>(bl.loop.size()) != nbd)
    fail(ErrorCode::OpenContactCurve, "multiple boundary loops");

  const int k = static_cast<int>(S.corners.size());
  std::vector<int> corner_pos(k, -1);
  for (int i = 0; i < static_cast<int>(bl.loop.size()); ++i) {
    const VertexTag& t = S.tags[bl.loop[i]];
    if (t.kind == VertexTag::Kind::OnEdge) {
      if (t.index < 0 || t.index >= k || corner_pos[t.index] != -1)
        fail(ErrorCode::OpenContactCurve, "corner tags inconsistent");
      corner_pos[t.index] = i;
    }
  }
  for (int j = 0; j < k; ++j)
    if (corner_pos[j] < 0) fail(ErrorCode::OpenContactCurve, "missing corner on a lateral edge");

  const int n = static_cast<int>(bl.loop.size());
  bl.face_chain.resize(k);
  for (int j = 0; j < k; ++j) {
    const int from = corner_pos[(j - 1 + k) % k];
    const int to = corner_pos[j];
    std::vector<int>& chain = bl.face_chain[j];
    for (int i = from;; i = (i + 1) % n) {
      chain.push_back(bl.loop[i]);
      const VertexTag& t = S.tags[bl.loop[i]];
      if (i != from && t.kind == VertexTag::Kind::OnEdge) break;
      if (i == to) break;
      if (static_cast<int>(chain.size()) > n)
        fail(ErrorCode::OpenContactCurve, "face chain fails to close");
    }
    if (chain.back() != bl.loop[to])
      fail(ErrorCode::OpenContactCurve, "corners out of cyclic face order");
    for (size_t i = 1; i + 1 < chain.size(); ++i)
      if (!(S.tags[chain[i]].kind == VertexTag::Kind::OnFace && S.tags[chain[i]].index == j))
        fail(ErrorCode::OpenContactCurve, "chain vertex tagged to the wrong face");
  }
  return bl;
}

inline void validate_surface(const TriSurface& S, const PolyhedralDomain& P) {
  const double sc = P.scale();
  const int k = P.num_sides();
  if (static_cast<int>(S.corners.size()) != k)
    fail(ErrorCode::NotAdmissible, "corner list must have one vertex per lateral edge");
  for (int v = 0; v < S.nv(); ++v) {
    const VertexTag& t = S.tags[v];
    if (t.kind == VertexTag::Kind::OnFace) {
      const Face f = P.side_face(t.index);
      if (std::abs((S.V[v] - f.origin).dot(f.normal)) > 1e-9 * sc)
        fail(ErrorCode::NotAdmissible, "face-constrained vertex off its face plane");
    } else if (t.kind == VertexTag::Kind::OnEdge) {
      const LateralEdge e = P.lateral_edge(t.index);
      const Vec3 d = e.b - e.a;
      const Vec3 r = S.V[v] - e.a;
      if ((r - r.dot(d) / d.squaredNorm() * d).norm() > 1e-9 * sc)
        fail(ErrorCode::NotAdmissible, "edge-constrained vertex off its edge line");
    }
  }
  boundary_loop(S);
}

// Parity test: does the surface separate the apex / top base from the base?
// The ray is nudged off the symmetry axis so it cannot thread mesh vertices.
inline bool separates(const PolyhedralDomain& P, const TriSurface& S) {
  Vec3 a;  // a point that must lie in E
  if (P.kind == PolyhedralDomain::Kind::Cone)
    a = P.apex + 0.02 * (P.interior_point() - P.apex);
  else {
    Vec3 tc = Vec3::Zero();
    for (const auto& p : P.top) tc += p;
    tc /= static_cast<double>(P.top.size());
    a = tc + 0.02 * (P.interior_point() - tc);
  }
  Vec3 b = Vec3::Zero();
  for (const auto& p : P.base) b += p;
  b /= static_cast<double>(P.base.size());
  b += 0.02 * (P.interior_point() - b);
  const Vec3 jitter = 0.0317071 * (P.base[0] - b) + 0.0123057 * (P.base[1] - b);
  a += jitter;
  b += jitter;

  const Vec3 d = b - a;
  int crossings = 0;
  for (const auto& t : S.F) {
    const Vec3& p0 = S.V[t[0]];
    const Vec3 e1 = S.V[t[1]] - p0, e2 = S.V[t[2]] - p0;
    const Vec3 pv = d.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-300) continue;
    const Vec3 tv = a - p0;
    const double u = tv.dot(pv) / det;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 qv = tv.cross(e1);
    const double v = d.dot(qv) / det;
    if (v < 0.0 || u + v > 1.0) continue;
    const double s = e2.dot(qv) / det;
    if (s > 0.0 && s < 1.0) ++crossings;
  }
  return (crossings % 2) == 1;
}

// ---------------------------------------------------------------------------
// Riemannian areas with exact discrete gradients
// ---------------------------------------------------------------------------

struct TriAreaGrad {
  double area = 0.0;
  std::array<Vec3, 3> d{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
};

// Area of one triangle under the pulled-back metric, one-point (centroid)
// quadrature. The gradient is the exact derivative of this discrete value,
// including the dependence of the metric on the centroid.
inline TriAreaGrad tri_area_g(const MetricField& field, const Vec3& p0, const Vec3& p1,
                              const Vec3& p2, bool with_grad) {
  const Vec3 e1 = p1 - p0, e2 = p2 - p0;
  const Vec3 c = (p0 + p1 + p2) / 3.0;
  const Mat3 G = field.eval_raw(c);
  const double m11 = e1.dot(G * e1), m22 = e2.dot(G * e2), m12 = e1.dot(G * e2);
  const double Q = m11 * m22 - m12 * m12;
  TriAreaGrad out;
  if (Q <= 0.0) fail(ErrorCode::DegenerateTriangle, "zero-area triangle under the metric");
  out.area = 0.5 * std::sqrt(Q);
  if (!with_grad) return out;

  const auto dG = field.d1(c);
  Vec3 T11, T22, T12;  // (e_a . dG_k e_b)
  for (int kk = 0; kk < 3; ++kk) {
    T11[kk] = e1.dot(dG[kk] * e1);
    T22[kk] = e2.dot(dG[kk] * e2);
    T12[kk] = e1.dot(dG[kk] * e2);
  }
  const Vec3 Ge1 = G * e1, Ge2 = G * e2;
  std::array<Vec3, 3> dm11{-2.0 * Ge1 + T11 / 3.0, 2.0 * Ge1 + T11 / 3.0, T11 / 3.0};
  std::array<Vec3, 3> dm22{-2.0 * Ge2 + T22 / 3.0, T22 / 3.0, 2.0 * Ge2 + T22 / 3.0};
  std::array<Vec3, 3> dm12{-(Ge1 + Ge2) + T12 / 3.0, Ge2 + T12 / 3.0, Ge1 + T12 / 3.0};
  const double w = 1.0 / (8.0 * out.area);
  for (int i = 0; i < 3; ++i)
    out.d[i] = w * (m22 * dm11[i] + m11 * dm22[i] - 2.0 * m12 * dm12[i]);
  return out;
}

inline double riemannian_area(const TriSurface& S, const MetricField& field) {
  double a = 0.0;
  for (const auto& t : S.F) a += tri_area_g(field, S.V[t[0]], S.V[t[1]], S.V[t[2]], false).area;
  return a;
}

inline std::vector<Vec3> riemannian_area_gradient(const TriSurface& S,
                                                  const MetricField& field) {
  std::vector<Vec3> g(S.V.size(), Vec3::Zero());
  for (const auto& t : S.F) {
    const auto ag = tri_area_g(field, S.V[t[0]], S.V[t[1]], S.V[t[2]], true);
    for (int c = 0; c < 3; ++c) g[t[c]] += ag.d[c];
  }
  return g;
}

// Per-vertex lumped g-areas (one third of incident triangle areas).
inline std::vector<double> lumped_areas(const TriSurface& S, const MetricField& field) {
  std::vector<double> m(S.V.size(), 0.0);
  for (const auto& t : S.F) {
    const double a = tri_area_g(field, S.V[t[0]], S.V[t[1]], S.V[t[2]], false).area / 3.0;
    for (int c = 0; c < 3; ++c) m[t[c]] += a;
  }
  return m;
}

inline double edge_length_g(const MetricField& field, const Vec3& a, const Vec3& b) {
  const Vec3 e = b - a;
  return std::sqrt(e.dot(field.eval_raw(0.5 * (a + b)) * e));
}

// Signed area of the fan triangle (pivot, a, b) in a face chart under the
// pulled-back 2D metric. The pivot side is long: integrate with fixed Gauss
// nodes along the fan direction and midpoint across, so the value and its
// gradient in (a, b) are smooth functions of the chain positions.
struct ChartTri {
  double area = 0.0;
  Vec2 da = Vec2::Zero(), db = Vec2::Zero();
};

namespace detail {

inline double chart_sdet(const MetricField& field, const Face& face, const Vec2& q,
                         Vec2* grad) {
  const Vec3 x = face.from_chart(q);
  const Mat3 G = field.eval_raw(x);
  Mat2 G2;
  G2(0, 0) = face.cu.dot(G * face.cu);
  G2(0, 1) = G2(1, 0) = face.cu.dot(G * face.cv);
  G2(1, 1) = face.cv.dot(G * face.cv);
  const double sdet = std::sqrt(G2.determinant());
  if (grad) {
    const auto dG = field.d1(x);
    const Mat2 G2i = G2.inverse();
    for (int a = 0; a < 2; ++a) {
      const Vec3 dir = (a == 0) ? face.cu : face.cv;
      Mat3 dGa = Mat3::Zero();
      for (int kk = 0; kk < 3; ++kk) dGa += dir[kk] * dG[kk];
      Mat2 dG2;
      dG2(0, 0) = face.cu.dot(dGa * face.cu);
      dG2(0, 1) = dG2(1, 0) = face.cu.dot(dGa * face.cv);
      dG2(1, 1) = face.cv.dot(dGa * face.cv);
      (*grad)[a] = 0.5 * sdet * (G2i * dG2).trace();
    }
  }
  return sdet;
}

}  // namespace detail

inline ChartTri chart_fan_tri(const MetricField& field, const Face& face, const Vec2& pivot,
                              const Vec2& a, const Vec2& b, bool with_grad) {
  // T(s) = pivot + s * (a + b - 2 pivot)/2 traces the strip midline; the
  // signed Jacobian of the cone map is s * det(a-p, b-p).
  static constexpr int kGauss = 8;
  static constexpr double gs[kGauss] = {0.01985507175123188, 0.10166676129318664,
                                        0.2372337950418355,  0.40828267875217505,
                                        0.5917173212478249,  0.7627662049581645,
                                        0.8983332387068134,  0.9801449282487681};
  static constexpr double gw[kGauss] = {0.05061426814518813, 0.11119051722668723,
                                        0.15685332293894364, 0.18134189168918099,
                                        0.18134189168918099, 0.15685332293894364,
                                        0.11119051722668723, 0.05061426814518813};
  const Vec2 ea = a - pivot, eb = b - pivot;
  const double det = ea.x() * eb.y() - ea.y() * eb.x();
  const Vec2 mid_dir = 0.5 * (ea + eb);
  double integral = 0.0;
  Vec2 dI_da = Vec2::Zero(), dI_db = Vec2::Zero();
  for (int k = 0; k < kGauss; ++k) {
    const double s = gs[k];
    const Vec2 q = pivot + s * mid_dir;
    Vec2 grad;
    const double sd = detail::chart_sdet(field, face, q, with_grad ? &grad : nullptr);
    integral += gw[k] * s * sd;
    if (with_grad) {
      dI_da += gw[k] * s * (0.5 * s) * grad;
      dI_db += gw[k] * s * (0.5 * s) * grad;
    }
  }
  ChartTri out;
  out.area = det * integral;
  if (with_grad) {
    const Vec2 ddet_da(eb.y(), -eb.x());
    const Vec2 ddet_db(-ea.y(), ea.x());
    out.da = ddet_da * integral + det * dI_da;
    out.db = ddet_db * integral + det * dI_db;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wetted areas
// ---------------------------------------------------------------------------

struct WettedArea {
  double area = 0.0;
  // gradient wrt the 3D position of each chain vertex (corner endpoints included)
  std::vector<int> verts;
  std::vector<Vec3> grad;
};

// Area of the side-face region enclosed by the contact chain and the apex /
// top edge of face j, measured in g. A signed fan from a fixed point makes
// the value independent of the chain shape and keeps the gradient local to
// the chain vertices.
inline WettedArea wetted_area(const PolyhedralDomain& P, const TriSurface& S, int j,
                              const MetricField& field, bool with_grad = false) {
  const BoundaryLoop bl = boundary_loop(S);
  const Face face = P.side_face(j);
  const auto& chain = bl.face_chain[j];
  const int k = P.num_sides();
  const int n = static_cast<int>(chain.size());

  // closed polygon in the chart: chain, then back across the top
  std::vector<Vec2> poly;
  std::vector<int> poly_vert;  // >=0: mesh vertex movable, -1: fixed reference point
  for (int i = 0; i < n; ++i) {
    poly.push_back(face.to_chart(S.V[chain[i]]));
    poly_vert.push_back(chain[i]);
  }
  if (P.kind == PolyhedralDomain::Kind::Cone) {
    poly.push_back(face.to_chart(P.apex));
    poly_vert.push_back(-1);
  } else {
    poly.push_back(face.to_chart(P.top[(j + 1) % k]));
    poly_vert.push_back(-1);
    poly.push_back(face.to_chart(P.top[j]));
    poly_vert.push_back(-1);
  }

  // fan about the apex / a top vertex of the face chart
  const Vec2 pivot = poly[n];

  double signed_area = 0.0;
  std::map<int, Vec2> cgrad;
  auto accumulate = [&cgrad](int v, const Vec2& g) {
    cgrad.try_emplace(v, Vec2::Zero()).first->second += g;
  };
  const int np = static_cast<int>(poly.size());
  for (int i = 0; i < np; ++i) {
    const int a = i, b = (i + 1) % np;
    const ChartTri tri = chart_fan_tri(field, face, pivot, poly[a], poly[b], with_grad);
    signed_area += tri.area;
    if (with_grad) {
      if (poly_vert[a] >= 0) accumulate(poly_vert[a], tri.da);
      if (poly_vert[b] >= 0) accumulate(poly_vert[b], tri.db);
    }
  }

  // polygon orientation: positive flat area means the winding matches CCW
  double flat = 0.0;
  for (int i = 0; i < np; ++i) {
    const Vec2 &a = poly[i], &b = poly[(i + 1) % np];
    flat += 0.5 * (a.x() * b.y() - a.y() * b.x());
  }
  const double sign = (flat >= 0.0) ? 1.0 : -1.0;

  WettedArea out;
  out.area = sign * signed_area;
  if (with_grad)
    for (auto& [v, gg] : cgrad) {
      out.verts.push_back(v);
      out.grad.push_back(sign * (face.cu * gg.x() + face.cv * gg.y()));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Vertex frames and curvature measurements
// ---------------------------------------------------------------------------

// g-unit vertex normal pointing toward the enclosed side (triangle
// orientation). For a tangent plane spanned by (e1,e2), G^{-1}(e1 x e2) is
// g-orthogonal to both.
inline std::vector<Vec3> vertex_normals_g(const TriSurface& S, const MetricField& field) {
  std::vector<Vec3> n(S.V.size(), Vec3::Zero());
  for (const auto& t : S.F) {
    const Vec3 cr = (S.V[t[1]] - S.V[t[0]]).cross(S.V[t[2]] - S.V[t[0]]);
    const Vec3 c = (S.V[t[0]] + S.V[t[1]] + S.V[t[2]]) / 3.0;
    const Vec3 ng = field.eval_raw(c).inverse() * cr;
    for (int cix = 0; cix < 3; ++cix) n[t[cix]] += ng;
  }
  for (int v = 0; v < S.nv(); ++v) {
    const Mat3 G = field.eval_raw(S.V[v]);
    const double nn = std::sqrt(n[v].dot(G * n[v]));
    if (nn > 0) n[v] /= nn;
  }
  return n;
}

// Mean curvature from the discrete first variation of the Riemannian area:
// H_i = -<grad_i Area, N_i> / m_i with the convention that a sphere enclosing
// E (normal pointing inside) has positive mean curvature.
inline std::vector<double> mean_curvature_vertexwise(const TriSurface& S,
                                                     const MetricField& field) {
  const auto grad = riemannian_area_gradient(S, field);
  const auto m = lumped_areas(S, field);
  const auto N = vertex_normals_g(S, field);
  std::vector<double> H(S.V.size(), 0.0);
  for (int v = 0; v < S.nv(); ++v) H[v] = -grad[v].dot(N[v]) / m[v];
  return H;
}

// Fitted second fundamental form at a vertex: 2x2 matrix in an orthonormal
// tangent frame of g, via a quadric fit in metric normal coordinates.
struct ShapeFit {
  Mat2 A = Mat2::Zero();
  Vec3 t1 = Vec3::Zero(), t2 = Vec3::Zero();  // frame in normal coordinates
  Eigen::Matrix3d chart = Mat3::Identity();   // L^T mapping to normal coords
  bool ok = false;
  double norm2() const { return A(0, 0) * A(0, 0) + 2 * A(0, 1) * A(0, 1) + A(1, 1) * A(1, 1); }
  // A(w,w) for a coordinate vector w tangent to the surface at the vertex
  double quad(const Vec3& w_coord) const {
    const Vec3 wy = chart * w_coord;
    Vec2 wt(wy.dot(t1), wy.dot(t2));
    const double n2 = wt.squaredNorm();
    if (n2 <= 0) return 0.0;
    return wt.dot(A * wt) / n2;
  }
};

inline ShapeFit fit_shape_operator(const TriSurface& S, const MetricField& field, int v,
                                   const std::vector<std::set<int>>& adj, const Vec3& normal,
                                   int ring_depth, bool cubic = false) {
  // gather the vertex ring
  std::set<int> ring{v};
  std::vector<int> frontier{v};
  for (int d = 0; d < ring_depth; ++d) {
    std::vector<int> nf;
    for (int u : frontier)
      for (int w : adj[u])
        if (ring.insert(w).second) nf.push_back(w);
    frontier = std::move(nf);
  }
  if (ring.size() < (cubic ? 13u : 7u)) {
    for (int u : frontier)
      for (int w : adj[u]) ring.insert(w);
  }

  const Vec3 x0 = S.V[v];
  const Mat3 G = field.eval_raw(x0);
  const auto gam = christoffel_at(field, x0);
  Eigen::LLT<Mat3> llt(G);
  const Mat3 Lt = Mat3(llt.matrixL()).transpose();

  ShapeFit fit;
  fit.chart = Lt;
  // the linear chart y = L^T x turns g into the identity, so tangents and the
  // normal transform the same way
  const Vec3 ny = (Lt * normal).normalized();
  // tangent frame orthogonal to ny
  Vec3 a = std::abs(ny.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  fit.t1 = (a - a.dot(ny) * ny).normalized();
  fit.t2 = ny.cross(fit.t1);

  std::vector<int> pts(ring.begin(), ring.end());
  const int n = static_cast<int>(pts.size());
  if (n < 6) return fit;
  // cubic terms remove the one-sided bias of boundary stencils
  const bool use_cubic = cubic && n >= 12;
  const int ncoef = use_cubic ? 10 : 6;
  Eigen::MatrixXd M(n, ncoef);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 d = S.V[pts[i]] - x0;
    Vec3 corr;
    for (int kk = 0; kk < 3; ++kk) corr[kk] = 0.5 * d.dot(gam[kk] * d);
    const Vec3 y = Lt * (d + corr);
    const double u = y.dot(fit.t1), w = y.dot(fit.t2), h = y.dot(ny);
    if (use_cubic)
      M.row(i) << 1.0, u, w, 0.5 * u * u, u * w, 0.5 * w * w, u * u * u, u * u * w, u * w * w,
          w * w * w;
    else
      M.row(i) << 1.0, u, w, 0.5 * u * u, u * w, 0.5 * w * w;
    rhs[i] = h;
  }
  Eigen::VectorXd c = M.colPivHouseholderQr().solve(rhs);
  fit.A << c[3], c[4], c[4], c[5];
  fit.ok = true;
  return fit;
}

// ---------------------------------------------------------------------------
// Geometry report
// ---------------------------------------------------------------------------

struct GeometryReport {
  // meshwide
  double area = 0.0;
  int chi = 0;
  std::vector<double> face_boundary_length;  // g-length of the chain on each side face

  // per-vertex fields (size nv)
  std::vector<double> mean_curvature;  // interior vertices only, 0 elsewhere
  std::vector<bool> interior;
  std::vector<double> abs_A2;            // |A|^2 from the quadric fit
  std::vector<double> gauss_fitted;      // ambient sectional + det A
  std::vector<double> defect_mass;       // interior: angle defect; boundary: turning
  std::vector<double> lumped_mass;       // g-areas
  std::vector<double> kg_point;          // boundary non-corner: turning / dual length
  std::vector<double> contact_angle;     // boundary non-corner vertices
  std::vector<Vec3> normal;              // g-unit vertex normals

  // per-corner (size k)
  std::vector<double> alpha_intrinsic;  // triangle-angle sum at the corner
  std::vector<double> alpha_tangent;    // g-angle between the boundary tangents

  std::vector<ShapeFit> fits;  // per-vertex quadric fits

  double max_interior_abs_H() const {
    double m = 0.0;
    for (size_t i = 0; i < mean_curvature.size(); ++i)
      if (interior[i]) m = std::max(m, std::abs(mean_curvature[i]));
    return m;
  }
};

namespace detail {
inline std::array<double, 3> tri_angles_from_lengths(double a, double b, double c) {
  // angle opposite each side, clamped for safety
  auto ang = [](double aa, double bb, double cc) {
    return std::acos(clamp_cos((bb * bb + cc * cc - aa * aa) / (2.0 * bb * cc)));
  };
  return {ang(a, b, c), ang(b, c, a), ang(c, a, b)};
}
}  // namespace detail

inline GeometryReport geometry_report(const PolyhedralDomain& P, const TriSurface& S,
                                      const MetricField& field) {
  GeometryReport rep;
  const int nv = S.nv();
  const int k = P.num_sides();
  rep.area = riemannian_area(S, field);
  rep.chi = S.euler_characteristic();
  rep.lumped_mass = lumped_areas(S, field);
  rep.normal = vertex_normals_g(S, field);
  rep.interior.assign(nv, false);
  for (int v = 0; v < nv; ++v) rep.interior[v] = true;
  const BoundaryLoop bl = boundary_loop(S);
  for (int v : bl.loop) rep.interior[v] = false;

  // mean curvature (interior)
  rep.mean_curvature.assign(nv, 0.0);
  {
    const auto H = mean_curvature_vertexwise(S, field);
    for (int v = 0; v < nv; ++v)
      if (rep.interior[v]) rep.mean_curvature[v] = H[v];
  }

  // quadric fits
  rep.abs_A2.assign(nv, 0.0);
  rep.gauss_fitted.assign(nv, 0.0);
  const auto adj = S.vertex_adjacency();
  rep.fits.resize(nv);
  for (int v = 0; v < nv; ++v) {
    rep.fits[v] = fit_shape_operator(S, field, v, adj, rep.normal[v],
                                     rep.interior[v] ? 2 : 3, !rep.interior[v]);
    rep.abs_A2[v] = rep.fits[v].norm2();
    // ambient sectional curvature of the tangent plane + det A (Gauss equation)
    const CurvatureTensors ct = curvature_at(field, S.V[v]);
    // tangent plane: any two coordinate vectors g-orthogonal to the normal
    const Mat3 G = ct.metric;
    Vec3 seed = std::abs(rep.normal[v].z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    Vec3 u1 = seed - (seed.dot(G * rep.normal[v])) * rep.normal[v];
    u1 /= std::sqrt(u1.dot(G * u1));
    Vec3 u2s = rep.normal[v].cross(u1);
    Vec3 u2 = u2s - (u2s.dot(G * rep.normal[v])) * rep.normal[v] -
              (u2s.dot(G * u1)) * u1;
    u2 /= std::sqrt(u2.dot(G * u2));
    rep.gauss_fitted[v] = ct.sectional(u1, u2) + rep.fits[v].A.determinant();
  }

  // intrinsic angles from g-edge lengths: per-triangle angles sum to pi, so
  // the combinatorial Gauss-Bonnet identity is exact.
  std::vector<double> angle_sum(nv, 0.0);
  for (const auto& t : S.F) {
    const double l01 = edge_length_g(field, S.V[t[0]], S.V[t[1]]);
    const double l12 = edge_length_g(field, S.V[t[1]], S.V[t[2]]);
    const double l20 = edge_length_g(field, S.V[t[2]], S.V[t[0]]);
    const auto ang = detail::tri_angles_from_lengths(l12, l20, l01);
    angle_sum[t[0]] += ang[0];
    angle_sum[t[1]] += ang[1];
    angle_sum[t[2]] += ang[2];
  }
  rep.defect_mass.assign(nv, 0.0);
  for (int v = 0; v < nv; ++v)
    rep.defect_mass[v] = (rep.interior[v] ? 2.0 * kPi : kPi) - angle_sum[v];

  // boundary pointwise quantities
  rep.kg_point.assign(nv, 0.0);
  rep.contact_angle.assign(nv, 0.0);
  rep.face_boundary_length.assign(k, 0.0);
  for (int j = 0; j < k; ++j) {
    const auto& chain = bl.face_chain[j];
    const Face face = P.side_face(j);
    for (size_t i = 0; i + 1 < chain.size(); ++i)
      rep.face_boundary_length[j] += edge_length_g(field, S.V[chain[i]], S.V[chain[i + 1]]);
    for (size_t i = 0; i < chain.size(); ++i) {
      const int v = chain[i];
      if (S.tags[v].kind == VertexTag::Kind::OnEdge) continue;
      const double dual = 0.5 * (edge_length_g(field, S.V[bl.prev[v]], S.V[v]) +
                                 edge_length_g(field, S.V[v], S.V[bl.next[v]]));
      rep.kg_point[v] = rep.defect_mass[v] / dual;
      const Vec3 X = face_unit_normal_g(field, face, S.V[v]);
      rep.contact_angle[v] =
          std::acos(clamp_cos(rep.normal[v].dot(field.eval_raw(S.V[v]) * X)));
    }
  }

  // corner angles; one-sided tangents from a second-order chord stencil
  auto chain_tangent = [&](int v, bool forward) {
    const int p1 = forward ? bl.next[v] : bl.prev[v];
    const int p2 = forward ? bl.next[p1] : bl.prev[p1];
    const Vec3 d1 = S.V[p1] - S.V[v];
    if (p2 < 0 || p2 == v) return d1;
    const Vec3 d2 = S.V[p2] - S.V[v];
    const double s1 = d1.norm();
    const double s2 = s1 + (S.V[p2] - S.V[p1]).norm();
    return Vec3((s2 * s2 * d1 - s1 * s1 * d2) / (s1 * s2 * (s2 - s1)));
  };
  rep.alpha_intrinsic.assign(k, 0.0);
  rep.alpha_tangent.assign(k, 0.0);
  for (int j = 0; j < k; ++j) {
    const int v = S.corners[j];
    rep.alpha_intrinsic[j] = angle_sum[v];
    rep.alpha_tangent[j] =
        angle_g(field.eval_raw(S.V[v]), chain_tangent(v, false), chain_tangent(v, true));
  }
  return rep;
}

struct GaussBonnetResidual {
  double defect_path = 0.0;  // intrinsic angles; exact combinatorial identity
  double fitted_path = 0.0;  // fitted K, turning kg, tangent corner angles
};

inline GaussBonnetResidual gauss_bonnet_residual(const GeometryReport& rep) {
  GaussBonnetResidual r;
  const int nv = static_cast<int>(rep.defect_mass.size());
  double total_turn = 0.0;
  for (int v = 0; v < nv; ++v) total_turn += rep.defect_mass[v];
  double corner_intr = 0.0, corner_tan = 0.0;
  for (size_t j = 0; j < rep.alpha_intrinsic.size(); ++j) {
    corner_intr += kPi - rep.alpha_intrinsic[j];
    corner_tan += kPi - rep.alpha_tangent[j];
  }
  // defect path: interior defects + boundary turning already include the
  // corner contributions as (pi - angle sum)
  r.defect_path = std::abs(total_turn - 2.0 * kPi * rep.chi);

  // fitted path: pointwise K integrated with lumped masses, boundary turning
  // without the corner part, tangent corner angles
  (void)corner_intr;
  double k_fit = 0.0;
  for (int v = 0; v < nv; ++v) k_fit += rep.gauss_fitted[v] * rep.lumped_mass[v];
  double corner_turn = 0.0;
  for (size_t j = 0; j < rep.alpha_intrinsic.size(); ++j)
    corner_turn += kPi - rep.alpha_intrinsic[j];
  double kg_noncorner = 0.0;
  for (int v = 0; v < nv; ++v)
    if (!rep.interior[v]) kg_noncorner += rep.defect_mass[v];
  kg_noncorner -= corner_turn;
  r.fitted_path = std::abs(k_fit + kg_noncorner + corner_tan - 2.0 * kPi * rep.chi);
  return r;
}

// Boundary frames at a non-corner boundary vertex.
struct BoundaryFrame {
  Vec3 tangent;   // g-unit along the boundary
  Vec3 conormal;  // nu: in-surface, g-orthogonal to the tangent, outward
  Vec3 face_conormal;  // nu-bar: in-face, g-orthogonal to the tangent, out of E
};

inline BoundaryFrame boundary_frame(const PolyhedralDomain& P, const TriSurface& S,
                                    const MetricField& field, const BoundaryLoop& bl,
                                    const std::vector<std::set<int>>& adj,
                                    const std::vector<Vec3>& normals, int v, int face_id) {
  const Mat3 G = field.eval_raw(S.V[v]);
  BoundaryFrame fr;
  Vec3 t = S.V[bl.next[v]] - S.V[bl.prev[v]];
  t /= std::sqrt(t.dot(G * t));
  fr.tangent = t;
  const Vec3& N = normals[v];
  // conormal nu: g-orthogonal to both t and N, pointing out of the surface;
  // the one-ring average points into the surface at a boundary vertex
  Vec3 inward = Vec3::Zero();
  for (int u : adj[v]) inward += S.V[u] - S.V[v];
  Vec3 nu = -inward;
  nu -= (nu.dot(G * t)) * t;
  nu -= (nu.dot(G * N)) * N;
  const double nn = std::sqrt(nu.dot(G * nu));
  if (nn > 1e-14) fr.conormal = nu / nn;

  const Face face = P.side_face(face_id);
  Vec3 nb = face.cu - (face.cu.dot(G * t)) * t;
  if (std::sqrt(nb.dot(G * nb)) < 1e-8 * P.scale()) nb = face.cv - (face.cv.dot(G * t)) * t;
  nb /= std::sqrt(nb.dot(G * nb));
  if (nb.dot(G * N) > 0) nb = -nb;  // nu-bar points out of E: <nu-bar, N> = -sin(gamma)
  fr.face_conormal = nb;
  return fr;
}

struct BoundaryIdentityReport {
  double max_residual = 0.0;
  int samples = 0;
};

// Residual of II(nub,nub) + cos(gamma) A(nu,nu) + sin(gamma) k_g - Hbar along
// the contact lines, valid for (approximately) minimal surfaces.
inline BoundaryIdentityReport boundary_identity_residual(const PolyhedralDomain& P,
                                                         const TriSurface& S,
                                                         const MetricField& field,
                                                         double h_inf_bound = 0.05) {
  const GeometryReport rep = geometry_report(P, S, field);
  if (rep.max_interior_abs_H() > h_inf_bound)
    fail(ErrorCode::NotMinimal, "surface is not minimal within the stated bound");
  const BoundaryLoop bl = boundary_loop(S);
  const auto adj = S.vertex_adjacency();
  BoundaryIdentityReport out;
  for (int j = 0; j < P.num_sides(); ++j) {
    const Face face = P.side_face(j);
    const auto& chain = bl.face_chain[j];
    for (size_t i = 1; i + 1 < chain.size(); ++i) {
      const int v = chain[i];
      const BoundaryFrame fr = boundary_frame(P, S, field, bl, adj, rep.normal, v, j);
      const double gamma = rep.contact_angle[v];
      const double A_nn = rep.fits[v].quad(fr.conormal);
      const double II_bb = face_second_fundamental_form(field, face, S.V[v], fr.face_conormal);
      const double Hbar = face_mean_curvature(P, field, face, S.V[v]);
      const double res =
          II_bb + std::cos(gamma) * A_nn + std::sin(gamma) * rep.kg_point[v] - Hbar;
      out.max_residual = std::max(out.max_residual, std::abs(res));
      ++out.samples;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corner regularity probe
// ---------------------------------------------------------------------------

struct RegularityProbe {
  std::vector<double> radius;
  std::vector<double> oscillation;
  double beta = 0.0;        // fitted decay exponent of oscillation ~ r^beta
  bool zero_oscillation = false;
};

inline RegularityProbe corner_regularity_probe(const std::vector<TriSurface>& levels,
                                               int corner_index, double r0) {
  if (levels.size() < 3)
    fail(ErrorCode::InsufficientLevels, "need at least three refinement levels");
  RegularityProbe out;
  for (size_t l = 0; l < levels.size(); ++l) {
    const TriSurface& S = levels[l];
    const Vec3 q = S.V[S.corners[corner_index]];
    double maxe = 0.0;
    for (const auto& t : S.F)
      for (int c = 0; c < 3; ++c)
        maxe = std::max(maxe, (S.V[t[c]] - S.V[t[(c + 1) % 3]]).norm());
    // keep several triangles in the ball at every level
    const double r = std::max(r0 / std::pow(2.0, static_cast<double>(l)), 4.0 * maxe);
    std::vector<Vec3> normals;
    for (const auto& t : S.F) {
      bool near = false;
      for (int c = 0; c < 3; ++c)
        if ((S.V[t[c]] - q).norm() <= r) near = true;
      if (!near) continue;
      Vec3 n = (S.V[t[1]] - S.V[t[0]]).cross(S.V[t[2]] - S.V[t[0]]);
      if (n.norm() > 0) normals.push_back(n.normalized());
    }
    double osc = 0.0;
    for (size_t a = 0; a < normals.size(); ++a)
      for (size_t b = a + 1; b < normals.size(); ++b)
        osc = std::max(osc, angle_between(normals[a], normals[b]));
    out.radius.push_back(r);
    out.oscillation.push_back(osc);
  }
  std::vector<double> lx, ly;
  for (size_t i = 0; i < out.radius.size(); ++i)
    if (out.oscillation[i] > 1e-14) {
      lx.push_back(std::log(out.radius[i]));
      ly.push_back(std::log(out.oscillation[i]));
    }
  if (lx.size() < 2) {
    out.zero_oscillation = true;
    return out;
  }
  double mx = 0, my = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= lx.size();
  my /= ly.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  out.beta = (den > 0) ? num / den : 0.0;
  return out;
}

}  // namespace polyscal
