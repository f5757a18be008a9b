#pragma once

#include <utility>

#include "polyscal/common.hpp"
#include "polyscal/domain.hpp"

namespace polyscal {

// Two half-planes with a common edge line enclosing a wedge of opening angle
// theta. Outward unit normals satisfy nu1 . nu2 = -cos(theta).
struct Wedge {
  double theta = kPi / 2;
  Vec3 edge = Vec3(0, 0, 1);   // unit edge direction
  Vec3 nu1, nu2;               // outward unit normals of the two faces
  Vec3 dir1, dir2;             // in-face directions away from the edge

  // Canonical wedge: edge along +z, bisector along +x.
  static Wedge canonical(double theta) {
    if (!(theta > 0.0 && theta < kPi)) fail(ErrorCode::BadAngle, "opening angle outside (0,pi)");
    Wedge w;
    w.theta = theta;
    const double a = 0.5 * theta;
    w.dir1 = Vec3(std::cos(a), -std::sin(a), 0);
    w.dir2 = Vec3(std::cos(a), std::sin(a), 0);
    w.nu1 = Vec3(-std::sin(a), -std::cos(a), 0);
    w.nu2 = Vec3(-std::sin(a), std::cos(a), 0);
    return w;
  }

  Vec3 bisector() const { return (dir1 + dir2).normalized(); }
};

struct AngleWindow {
  double lo = 0.0;  // |pi - (g1 + g2)|
  double hi = 0.0;  // pi - |g1 - g2|
  bool contains(double theta) const { return theta > lo && theta < hi; }
  bool empty() const { return !(lo < hi); }
};

// Open interval of wedge openings admitting a plane with contact angles
// (g1, g2) against the two faces.
inline AngleWindow angle_window(double g1, double g2) {
  if (!(g1 > 0.0 && g1 < kPi) || !(g2 > 0.0 && g2 < kPi))
    fail(ErrorCode::BadAngle, "contact angles must lie in (0,pi)");
  AngleWindow w;
  w.lo = std::abs(kPi - (g1 + g2));
  w.hi = kPi - std::abs(g1 - g2);
  return w;
}

// Unit normal of the unique plane meeting face i at contact angle g_i,
// transverse to the wedge. Two mirror solutions exist (reflection through the
// edge-orthogonal plane); the canonical one has positive component along the
// wedge edge, ties broken lexicographically.
inline Vec3 plane_from_contact_angles(const Wedge& w, double g1, double g2) {
  if (!(g1 > 0.0 && g1 < kPi) || !(g2 > 0.0 && g2 < kPi))
    fail(ErrorCode::BadAngle, "contact angles must lie in (0,pi)");
  const double c1 = std::cos(g1), c2 = std::cos(g2);
  const double ct = -w.nu1.dot(w.nu2);  // cos(theta)
  // solve [1 -ct; -ct 1] [a;b] = [c1;c2], then close up to a unit vector
  const double det = 1.0 - ct * ct;
  const double a = (c1 + ct * c2) / det;
  const double b = (c2 + ct * c1) / det;
  const double z2 = 1.0 - (a * c1 + b * c2);
  const double tol = 1e-14;
  if (z2 < -tol)
    fail(ErrorCode::NoSolution, "wedge opening outside the admissible angle window");
  if (z2 <= tol)
    fail(ErrorCode::Tangential, "plane tangential to the edge (angle window endpoint)");
  Vec3 t = w.nu1.cross(w.nu2);
  t /= t.norm();
  Vec3 nu = a * w.nu1 + b * w.nu2 + std::sqrt(z2) * t;
  const double along = nu.dot(w.edge);
  if (along < 0.0) nu = a * w.nu1 + b * w.nu2 - std::sqrt(z2) * t;
  else if (along == 0.0) {
    const Vec3 alt = a * w.nu1 + b * w.nu2 - std::sqrt(z2) * t;
    if (std::lexicographical_compare(alt.data(), alt.data() + 3, nu.data(), nu.data() + 3))
      nu = alt;
  }
  return nu / nu.norm();
}

// Contact angles realized by the plane with normal nu against the two faces.
inline std::array<double, 2> measure_contact_angles(const Wedge& w, const Vec3& nu) {
  return {std::acos(clamp_cos(nu.dot(w.nu1))), std::acos(clamp_cos(nu.dot(w.nu2)))};
}

// Interior angle between the two intersection lines cut by the contact plane
// on the wedge faces: cos(alpha) = (cos g1 cos g2 + cos theta)/(sin g1 sin g2).
inline double corner_angle(double g1, double g2, double theta) {
  const AngleWindow w = angle_window(g1, g2);
  if (!w.contains(theta))
    fail(ErrorCode::NoSolution, "wedge opening outside the admissible angle window");
  const double c = (std::cos(g1) * std::cos(g2) + std::cos(theta)) /
                   (std::sin(g1) * std::sin(g2));
  return std::acos(clamp_cos(c));
}

// The corner angle grows with the wedge opening at fixed contact angles.
inline bool corner_angle_monotonicity_check(double g1, double g2, double theta_a,
                                            double theta_b) {
  if (theta_a > theta_b) std::swap(theta_a, theta_b);
  return corner_angle(g1, g2, theta_a) <= corner_angle(g1, g2, theta_b) + 1e-14;
}

// ---------------------------------------------------------------------------
// Cone slice energy identity
// ---------------------------------------------------------------------------

struct ConeSliceEnergy {
  double slice_area = 0.0;                 // cross-section area at the slice plane
  std::vector<double> side_areas;          // per-face area above the slice
  std::vector<double> gamma;               // angles used in the weighting
  double residual = 0.0;                   // slice_area - sum cos(gamma_j) side_area_j
};

// Slices the flat model cone with the plane z = c (parallel to the base, the
// plane realizing the model contact angles) and evaluates the weighted-area
// residual. It vanishes identically when gamma are the model angles, by
// projecting the lateral boundary onto the slice plane.
inline ConeSliceEnergy cone_slice_identity(const PolyhedralDomain& P, double c,
                                           std::vector<double> gamma = {}) {
  if (P.kind != PolyhedralDomain::Kind::Cone)
    fail(ErrorCode::InvalidDomain, "slice identity needs a cone domain");
  const double az = P.apex.z();
  const double f = c / az;  // fraction of the height
  if (!(f > 0.0 && f < 1.0)) fail(ErrorCode::EmptySlice, "plane misses the cone interior");
  const double s = 1.0 - f;  // similarity ratio of the cross-section about the apex
  if (gamma.empty()) gamma = model_angles(P).gamma;
  if (static_cast<int>(gamma.size()) != P.num_sides())
    fail(ErrorCode::BadConfig, "gamma list length must match face count");

  ConeSliceEnergy out;
  out.gamma = gamma;
  out.slice_area = s * s * P.base_face().area_flat();
  out.residual = out.slice_area;
  for (int j = 0; j < P.num_sides(); ++j) {
    const double aj = s * s * P.side_face(j).area_flat();
    out.side_areas.push_back(aj);
    out.residual -= std::cos(gamma[j]) * aj;
  }
  return out;
}

}  // namespace polyscal
