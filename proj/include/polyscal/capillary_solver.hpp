#pragma once

#include <functional>
#include <optional>

#include "polyscal/common.hpp"
#include "polyscal/domain.hpp"
#include "polyscal/metric_field.hpp"
#include "polyscal/surface_mesh.hpp"

namespace polyscal {

inline std::vector<double> resolve_gamma(const PolyhedralDomain& P,
                                         const std::vector<double>& gamma = {}) {
  if (gamma.empty()) return model_angles(P).gamma;
  if (static_cast<int>(gamma.size()) != P.num_sides())
    fail(ErrorCode::BadConfig, "gamma list length must match face count");
  for (double g : gamma)
    if (!(g > 0.0 && g < kPi)) fail(ErrorCode::BadAngle, "contact angles must lie in (0,pi)");
  return gamma;
}

// Capillary energy: surface area minus the cos(gamma_j)-weighted areas of the
// side-face regions enclosed with the apex / top.
inline double energy(const PolyhedralDomain& P, const TriSurface& S, const MetricField& field,
                     const std::vector<double>& gamma_in = {}) {
  const auto gamma = resolve_gamma(P, gamma_in);
  if (!separates(P, S)) fail(ErrorCode::NotAdmissible, "surface does not separate the domain");
  double F = riemannian_area(S, field);
  for (int j = 0; j < P.num_sides(); ++j) {
    const double c = std::cos(gamma[j]);
    if (std::abs(c) < 1e-15) continue;
    F -= c * wetted_area(P, S, j, field, false).area;
  }
  return F;
}

namespace detail {

// Orthogonal projector onto the admissible motions of a vertex.
inline Mat3 dof_projector(const PolyhedralDomain& P, const VertexTag& t) {
  switch (t.kind) {
    case VertexTag::Kind::Interior:
      return Mat3::Identity();
    case VertexTag::Kind::OnFace: {
      const Face f = P.side_face(t.index);
      return f.cu * f.cu.transpose() + f.cv * f.cv.transpose();
    }
    case VertexTag::Kind::OnEdge: {
      const Vec3 d = P.lateral_edge(t.index).dir();
      return d * d.transpose();
    }
  }
  return Mat3::Identity();
}

struct EnergyEval {
  double value = 0.0;
  std::vector<Vec3> grad;  // unprojected gradient wrt vertex positions
};

inline EnergyEval energy_with_gradient(const PolyhedralDomain& P, const TriSurface& S,
                                       const MetricField& field,
                                       const std::vector<double>& gamma) {
  EnergyEval out;
  out.grad.assign(S.V.size(), Vec3::Zero());
  for (const auto& t : S.F) {
    const auto ag = tri_area_g(field, S.V[t[0]], S.V[t[1]], S.V[t[2]], true);
    out.value += ag.area;
    for (int c = 0; c < 3; ++c) out.grad[t[c]] += ag.d[c];
  }
  for (int j = 0; j < P.num_sides(); ++j) {
    const double c = std::cos(gamma[j]);
    if (std::abs(c) < 1e-15) continue;
    const WettedArea w = wetted_area(P, S, j, field, true);
    out.value -= c * w.area;
    for (size_t i = 0; i < w.verts.size(); ++i) out.grad[w.verts[i]] -= c * w.grad[i];
  }
  return out;
}

}  // namespace detail

struct Clearances {
  double base = 0.0;  // distance from the surface to the base face
  double far = 0.0;   // distance to the apex (cone) or the top face (prism)
};

namespace detail {
inline double point_to_face_distance(const Face& f, const Vec3& x) {
  const Vec2 q = f.to_chart(x);
  const double dn = (x - f.origin).dot(f.normal);
  // inside test in the chart (convex polygon, either winding)
  const int n = static_cast<int>(f.verts.size());
  double winding = 0.0;
  {
    const Vec2 a = f.to_chart(f.verts[0]);
    const Vec2 b = f.to_chart(f.verts[1]);
    const Vec2 c = f.to_chart(f.verts[2]);
    winding = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  }
  bool inside = true;
  double edge_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const Vec2 a = f.to_chart(f.verts[i]);
    const Vec2 b = f.to_chart(f.verts[(i + 1) % n]);
    const Vec2 e = b - a;
    const double cr = e.x() * (q.y() - a.y()) - e.y() * (q.x() - a.x());
    if (cr * winding < 0) inside = false;
    const double s = std::clamp((q - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    edge_dist = std::min(edge_dist, (q - (a + s * e)).norm());
  }
  if (inside) return std::abs(dn);
  return std::sqrt(dn * dn + edge_dist * edge_dist);
}
}  // namespace detail

inline Clearances obstacle_check(const PolyhedralDomain& P, const TriSurface& S) {
  Clearances c;
  c.base = std::numeric_limits<double>::infinity();
  c.far = std::numeric_limits<double>::infinity();
  const Face base = P.base_face();
  const std::optional<Face> top =
      (P.kind == PolyhedralDomain::Kind::Prism) ? std::optional<Face>(P.top_face())
                                                : std::nullopt;
  for (const auto& v : S.V) {
    c.base = std::min(c.base, detail::point_to_face_distance(base, v));
    if (top)
      c.far = std::min(c.far, detail::point_to_face_distance(*top, v));
    else
      c.far = std::min(c.far, (v - P.apex).norm());
  }
  return c;
}

struct EnergyReport {
  double energy = 0.0;
  double area = 0.0;
  std::vector<double> wetted;
  std::vector<double> gamma;
  double h_inf = 0.0;                // max |H| over interior vertices
  double max_angle_residual = 0.0;   // max |measured contact angle - gamma_j|
  std::vector<double> face_angle_residual;
  double clearance_base = 0.0;
  double clearance_far = 0.0;
  double grad_inf = 0.0;             // projected-gradient sup norm at return
  int iterations = 0;
  bool converged = false;
};

inline EnergyReport make_energy_report(const PolyhedralDomain& P, const TriSurface& S,
                                       const MetricField& field,
                                       const std::vector<double>& gamma_in = {},
                                       int iterations = 0, bool converged = true,
                                       double grad_inf = 0.0) {
  const auto gamma = resolve_gamma(P, gamma_in);
  EnergyReport rep;
  rep.gamma = gamma;
  rep.area = riemannian_area(S, field);
  rep.energy = rep.area;
  for (int j = 0; j < P.num_sides(); ++j) {
    const double w = wetted_area(P, S, j, field, false).area;
    rep.wetted.push_back(w);
    rep.energy -= std::cos(gamma[j]) * w;
  }
  const GeometryReport geo = geometry_report(P, S, field);
  rep.h_inf = geo.max_interior_abs_H();
  rep.face_angle_residual.assign(P.num_sides(), 0.0);
  const BoundaryLoop bl = boundary_loop(S);
  for (int j = 0; j < P.num_sides(); ++j) {
    const auto& chain = bl.face_chain[j];
    for (size_t i = 1; i + 1 < chain.size(); ++i)
      rep.face_angle_residual[j] = std::max(
          rep.face_angle_residual[j], std::abs(geo.contact_angle[chain[i]] - gamma[j]));
    rep.max_angle_residual = std::max(rep.max_angle_residual, rep.face_angle_residual[j]);
  }
  const Clearances c = obstacle_check(P, S);
  rep.clearance_base = c.base;
  rep.clearance_far = c.far;
  rep.iterations = iterations;
  rep.converged = converged;
  rep.grad_inf = grad_inf;
  return rep;
}

struct SolverOptions {
  double tol_rel = 1e-6;       // projected-gradient tolerance, times the domain scale
  int max_iterations = 50000;
  double step0_rel = 0.1;      // initial step, times the mesh size
  double armijo_c = 1e-4;
  double obstacle_eps_rel = 2.0;  // abort clearance, times the mesh size
  std::vector<double> gamma;   // empty = model angles
};

struct MinimizeResult {
  TriSurface surface;
  EnergyReport report;
};

// Projected gradient descent on vertex positions with backtracking line
// search. Obstacle faces are not projected against; contact aborts the run.
inline MinimizeResult minimize(const PolyhedralDomain& P, const MetricField& field,
                               const TriSurface& init, const SolverOptions& opts = {}) {
  validate_surface(init, P);
  if (!separates(P, init))
    fail(ErrorCode::NotAdmissible, "initial surface does not separate the domain");
  const auto gamma = resolve_gamma(P, opts.gamma);

  TriSurface S = init;
  double h_mesh = 0.0;
  for (const auto& t : S.F)
    for (int c = 0; c < 3; ++c)
      h_mesh = std::max(h_mesh, (S.V[t[c]] - S.V[t[(c + 1) % 3]]).norm());
  const double tol = opts.tol_rel * P.scale();
  const double eps_obs = opts.obstacle_eps_rel * h_mesh;

  {
    const Clearances c0 = obstacle_check(P, S);
    if (std::min(c0.base, c0.far) < eps_obs)
      fail(ErrorCode::ObstacleContact, "initial surface touches an obstacle face");
  }

  std::vector<Mat3> proj(S.V.size());
  for (int v = 0; v < S.nv(); ++v) proj[v] = detail::dof_projector(P, S.tags[v]);

  auto eval_energy = [&](const TriSurface& M) {
    double F = riemannian_area(M, field);
    for (int j = 0; j < P.num_sides(); ++j) {
      const double c = std::cos(gamma[j]);
      if (std::abs(c) < 1e-15) continue;
      F -= c * wetted_area(P, M, j, field, false).area;
    }
    return F;
  };

  detail::EnergyEval ev = detail::energy_with_gradient(P, S, field, gamma);
  double alpha = -1.0;
  int iter = 0;
  bool converged = false;
  double grad_inf = 0.0;

  for (; iter < opts.max_iterations; ++iter) {
    std::vector<Vec3> d(S.V.size());
    grad_inf = 0.0;
    double g2 = 0.0;
    for (int v = 0; v < S.nv(); ++v) {
      d[v] = -(proj[v] * ev.grad[v]);
      grad_inf = std::max(grad_inf, d[v].cwiseAbs().maxCoeff());
      g2 += d[v].squaredNorm();
    }
    if (grad_inf < tol) {
      converged = true;
      break;
    }
    if (alpha < 0.0) alpha = opts.step0_rel * h_mesh / grad_inf;

    bool accepted = false;
    double alpha_try = 2.0 * alpha;
    for (int ls = 0; ls < 60; ++ls) {
      TriSurface trial = S;
      for (int v = 0; v < S.nv(); ++v) trial.V[v] += alpha_try * d[v];
      double F_trial;
      try {
        F_trial = eval_energy(trial);
      } catch (const Error&) {
        alpha_try *= 0.5;  // degenerate trial, shrink
        continue;
      }
      if (F_trial <= ev.value - opts.armijo_c * alpha_try * g2) {
        S = std::move(trial);
        alpha = alpha_try;
        ev = detail::energy_with_gradient(P, S, field, gamma);
        if (!(ev.value <= F_trial + 1e-12 * std::abs(F_trial) + 1e-14))
          fail(ErrorCode::SolverBreakdown, "inconsistent energy recomputation");
        accepted = true;
        break;
      }
      alpha_try *= 0.5;
    }
    if (!accepted) break;  // line search stalled; report best iterate

    const Clearances c = obstacle_check(P, S);
    if (std::min(c.base, c.far) < eps_obs)
      fail(ErrorCode::ObstacleContact, "surface reached an obstacle face");
  }

  if (!separates(P, S))
    fail(ErrorCode::NotAdmissible, "surface lost the separation property");
  MinimizeResult res;
  res.report = make_energy_report(P, S, field, gamma, iter, converged, grad_inf);
  res.surface = std::move(S);
  return res;
}

struct InfimumProbe {
  double min_energy = 0.0;
  std::string verdict;  // "negative" | "zero" | "positive"
  double band = 5e-3;
};

// Sign estimate of the infimum over a family of slice initializations plus
// descent runs from each.
inline InfimumProbe infimum_probe(const PolyhedralDomain& P, const MetricField& field,
                                  const std::vector<double>& slice_params, double h,
                                  SolverOptions opts = {}, bool run_minimize = true) {
  if (slice_params.empty()) fail(ErrorCode::BadConfig, "need at least one admissible init");
  InfimumProbe out;
  out.min_energy = std::numeric_limits<double>::infinity();
  const auto gamma = resolve_gamma(P, opts.gamma);
  opts.gamma = gamma;
  for (double t : slice_params) {
    const TriSurface S = build_slice_mesh(P, t, h);
    out.min_energy = std::min(out.min_energy, energy(P, S, field, gamma));
    if (run_minimize) {
      try {
        const MinimizeResult r = minimize(P, field, S, opts);
        out.min_energy = std::min(out.min_energy, r.report.energy);
      } catch (const Error&) {
        // obstacle contact or lost admissibility: slice value already counted
      }
    }
  }
  if (out.min_energy < -out.band)
    out.verdict = "negative";
  else if (out.min_energy > out.band)
    out.verdict = "positive";
  else
    out.verdict = "zero";
  return out;
}

}  // namespace polyscal
