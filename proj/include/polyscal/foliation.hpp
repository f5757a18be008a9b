#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <functional>

#include "polyscal/capillary_solver.hpp"
#include "polyscal/stability.hpp"

namespace polyscal {

// ---------------------------------------------------------------------------
// Neumann problem on a cornered polygon mesh
// ---------------------------------------------------------------------------

struct NeumannResult {
  Eigen::VectorXd u;   // mean-zero solution
  int iterations = 0;
  double residual = 0.0;
  double compatibility_defect = 0.0;
};

// Solves lap u = f, du/dnu = g weakly: K u = b with
// b_i = g_i * (boundary dual length) - f_i * m_i. The consistent system is
// singular along constants; the data defect is projected out and reported.
inline NeumannResult neumann_solve(const TriSurface& S, const MetricField& field,
                                   const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                                   double tol = 1e-12, int max_iter = 20000) {
  const int n = S.nv();
  if (f.size() != n || g.size() != n)
    fail(ErrorCode::BadConfig, "field vectors must have one value per vertex");
  const SparseMat K = build_stiffness(S, field);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
  {
    const auto lm = lumped_areas(S, field);
    for (int i = 0; i < n; ++i) m[i] = lm[i];
  }
  Eigen::VectorXd dual = Eigen::VectorXd::Zero(n);
  const BoundaryLoop bl = boundary_loop(S);
  for (int v : bl.loop) {
    dual[v] = 0.5 * (edge_length_g(field, S.V[bl.prev[v]], S.V[v]) +
                     edge_length_g(field, S.V[v], S.V[bl.next[v]]));
  }

  Eigen::VectorXd b = g.cwiseProduct(dual) - f.cwiseProduct(m);
  NeumannResult out;
  out.compatibility_defect = b.sum();
  const double bnorm = b.norm();
  if (bnorm > 0 && std::abs(out.compatibility_defect) > 1e-6 * bnorm)
    fail(ErrorCode::Incompatible, "Neumann data violate the divergence constraint");
  b -= out.compatibility_defect * (m / m.sum());

  // Jacobi-preconditioned CG on the complement of the constant kernel; every
  // iterate is kept Euclidean-orthogonal to the kernel so the restricted
  // operator stays positive definite
  Eigen::VectorXd diag(n);
  for (int i = 0; i < n; ++i) diag[i] = std::max(K.coeff(i, i), 1e-300);
  auto deflate = [n](Eigen::VectorXd& v) { v.array() -= v.sum() / n; };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b;
  deflate(r);
  Eigen::VectorXd z = r.cwiseQuotient(diag);
  deflate(z);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  const double stop = std::max(tol * std::max(bnorm, 1e-30), 1e-300);
  int it = 0;
  for (; it < max_iter; ++it) {
    if (r.norm() <= stop) break;
    Eigen::VectorXd Kp = K * p;
    const double alpha = rz / p.dot(Kp);
    x += alpha * p;
    r -= alpha * Kp;
    deflate(r);
    z = r.cwiseQuotient(diag);
    deflate(z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (r.norm() > std::max(1e-8 * std::max(bnorm, 1.0), stop) && it == max_iter)
    fail(ErrorCode::NoConvergence, "conjugate gradients stalled");
  x.array() -= x.dot(m) / m.sum();  // report the mass-mean-zero representative
  out.u = x;
  out.iterations = it;
  out.residual = r.norm();
  return out;
}

// ---------------------------------------------------------------------------
// Leaf coordinates: graphs over a reference slice in homotopy flow
// ---------------------------------------------------------------------------

// Leaves are graphs u over a reference cross-section: vertex i of the leaf at
// flow parameter tau sits at ref.V[i] + (tau + u_i - t_ref) * dir[i]. The
// direction field rules the side faces, so sliding constraints hold exactly
// for any u.
struct LeafCoordinates {
  TriSurface ref;
  std::vector<Vec3> dir;
  std::vector<double> ref_mass;  // flat lumped areas of the reference (mean-zero weights)
  double t_ref = 0.5;
  bool cone = false;

  // user-facing leaf parameter: cones use the height fraction below the apex
  double tau_of_rho(double rho) const { return cone ? 1.0 - rho : rho; }

  std::vector<Vec3> positions(double tau, const Eigen::VectorXd& u) const {
    std::vector<Vec3> V(ref.V.size());
    for (size_t i = 0; i < V.size(); ++i)
      V[i] = ref.V[i] + (tau + u[static_cast<int>(i)] - t_ref) * dir[i];
    return V;
  }
};

inline LeafCoordinates build_leaf_coordinates(const PolyhedralDomain& P, double h) {
  LeafCoordinates lc;
  lc.cone = (P.kind == PolyhedralDomain::Kind::Cone);
  lc.t_ref = 0.5;
  lc.ref = build_slice_mesh(P, lc.t_ref, h);
  lc.dir.resize(lc.ref.V.size());
  for (size_t i = 0; i < lc.ref.V.size(); ++i) {
    const Vec3& x = lc.ref.V[i];
    if (lc.cone) {
      lc.dir[i] = (P.apex - x) / (1.0 - lc.t_ref);
    } else {
      const double s = P.top_scale;
      const Vec3 b = (x - lc.t_ref * P.top_offset) / (1.0 + lc.t_ref * (s - 1.0));
      lc.dir[i] = (s - 1.0) * b + P.top_offset;
    }
  }
  const MetricField flat = make_flat(P.bounding_box(1.0));
  const auto lm = lumped_areas(lc.ref, flat);
  lc.ref_mass = lm;
  return lc;
}

// ---------------------------------------------------------------------------
// CMC capillary leaves
// ---------------------------------------------------------------------------

struct LeafState {
  double rho = 0.0;
  double lambda = 0.0;           // constant mean curvature of the leaf
  Eigen::VectorXd u;             // graph over the reference slice, mean zero
  TriSurface mesh;
  double h_residual = 0.0;       // max interior |H - lambda|
  double angle_residual = 0.0;   // max |<N,X> - cos gamma|
  double C = 0.0;                // sum_j cot(gamma_j) * boundary length on face j
  double energy = 0.0;
  double min_lapse = std::numeric_limits<double>::quiet_NaN();
  int newton_iterations = 0;
  std::vector<double> increment_norms;  // Newton update history
};

struct LeafOptions {
  double tol = 1e-10;       // sup-norm of the residual system
  int max_newton = 30;
  double fd_step = 1e-6;    // probing step for the Jacobian
  std::vector<double> gamma;
};

namespace detail {

struct LeafEvaluator {
  const PolyhedralDomain& P;
  const MetricField& field;
  const LeafCoordinates& lc;
  std::vector<double> gamma;
  std::vector<std::vector<int>> vfaces;            // vertex -> incident triangles
  std::vector<std::vector<int>> star;              // vertex -> itself + ring
  std::vector<Face> side_faces;

  LeafEvaluator(const PolyhedralDomain& p, const MetricField& f, const LeafCoordinates& c,
                std::vector<double> g)
      : P(p), field(f), lc(c), gamma(std::move(g)) {
    vfaces = lc.ref.vertex_faces();
    const auto adj = lc.ref.vertex_adjacency();
    star.resize(lc.ref.V.size());
    for (size_t v = 0; v < star.size(); ++v) {
      star[v].push_back(static_cast<int>(v));
      for (int w : adj[v]) star[v].push_back(w);
    }
    for (int j = 0; j < P.num_sides(); ++j) side_faces.push_back(P.side_face(j));
  }

  // g-unit normal at vertex i of the positioned mesh
  Vec3 normal_at(const std::vector<Vec3>& V, int i) const {
    Vec3 n = Vec3::Zero();
    for (int f : vfaces[i]) {
      const auto& t = lc.ref.F[f];
      const Vec3 cr = (V[t[1]] - V[t[0]]).cross(V[t[2]] - V[t[0]]);
      const Vec3 c = (V[t[0]] + V[t[1]] + V[t[2]]) / 3.0;
      n += field.eval_raw(c).inverse() * cr;
    }
    const Mat3 G = field.eval_raw(V[i]);
    return n / std::sqrt(n.dot(G * n));
  }

  double mean_curvature_at(const std::vector<Vec3>& V, int i) const {
    Vec3 grad = Vec3::Zero();
    double mass = 0.0;
    for (int f : vfaces[i]) {
      const auto& t = lc.ref.F[f];
      const auto ag = tri_area_g(field, V[t[0]], V[t[1]], V[t[2]], true);
      mass += ag.area / 3.0;
      for (int c = 0; c < 3; ++c)
        if (t[c] == i) grad += ag.d[c];
    }
    return -grad.dot(normal_at(V, i)) / mass;
  }

  double angle_residual_at(const std::vector<Vec3>& V, int i, int face_id) const {
    const Vec3 N = normal_at(V, i);
    const Vec3 X = face_unit_normal_g(field, side_faces[face_id], V[i]);
    return N.dot(field.eval_raw(V[i]) * X) - std::cos(gamma[face_id]);
  }

  // residual of the equation attached to vertex i
  double row(const std::vector<Vec3>& V, int i, double lambda) const {
    const VertexTag& t = lc.ref.tags[i];
    switch (t.kind) {
      case VertexTag::Kind::Interior:
        return mean_curvature_at(V, i) - lambda;
      case VertexTag::Kind::OnFace:
        return angle_residual_at(V, i, t.index);
      case VertexTag::Kind::OnEdge: {
        const int k = P.num_sides();
        return 0.5 * (angle_residual_at(V, i, t.index) +
                      angle_residual_at(V, i, (t.index + 1) % k));
      }
    }
    return 0.0;
  }
};

}  // namespace detail

inline LeafState leaf_solve(const PolyhedralDomain& P, const MetricField& field,
                            const LeafCoordinates& lc, double rho,
                            const Eigen::VectorXd& warm_u = {}, double warm_lambda = 0.0,
                            const LeafOptions& opts = {}) {
  const auto gamma = resolve_gamma(P, opts.gamma);
  detail::LeafEvaluator ev(P, field, lc, gamma);
  const int n = lc.ref.nv();
  const double tau = lc.tau_of_rho(rho);

  Eigen::VectorXd u = (warm_u.size() == n) ? warm_u : Eigen::VectorXd::Zero(n);
  double lambda = warm_lambda;

  auto check_domain = [&](const Eigen::VectorXd& uu) {
    for (int i = 0; i < n; ++i) {
      const double ti = tau + uu[i];
      if (!(ti > 1e-3 && ti < 1.0 - 1e-3))
        fail(ErrorCode::LeafLeftDomain, "leaf graph left the admissible flow range");
    }
  };
  check_domain(u);

  auto full_residual = [&](const Eigen::VectorXd& uu, double ll, std::vector<Vec3>& V) {
    V = lc.positions(tau, uu);
    Eigen::VectorXd F(n + 1);
    for (int i = 0; i < n; ++i) F[i] = ev.row(V, i, ll);
    double mz = 0.0;
    for (int i = 0; i < n; ++i) mz += lc.ref_mass[i] * uu[i];
    F[n] = mz;
    return F;
  };

  LeafState leaf;
  leaf.rho = rho;
  std::vector<Vec3> V;
  Eigen::VectorXd F = full_residual(u, lambda, V);
  double fnorm = F.lpNorm<Eigen::Infinity>();
  int iter = 0;
  for (; iter < opts.max_newton && fnorm > opts.tol; ++iter) {
    // Jacobian by local probing: moving u_j displaces only vertex j, touching
    // the rows of its star plus the mean-zero row.
    std::vector<Eigen::Triplet<double>> trips;
    const double d = opts.fd_step;
    for (int j = 0; j < n; ++j) {
      const Vec3 saved = V[j];
      V[j] = lc.ref.V[j] + (tau + u[j] + d - lc.t_ref) * lc.dir[j];
      std::vector<double> plus(ev.star[j].size());
      for (size_t s = 0; s < ev.star[j].size(); ++s)
        plus[s] = ev.row(V, ev.star[j][s], lambda);
      V[j] = lc.ref.V[j] + (tau + u[j] - d - lc.t_ref) * lc.dir[j];
      for (size_t s = 0; s < ev.star[j].size(); ++s) {
        const double minus = ev.row(V, ev.star[j][s], lambda);
        trips.emplace_back(ev.star[j][s], j, (plus[s] - minus) / (2.0 * d));
      }
      V[j] = saved;
      trips.emplace_back(n, j, lc.ref_mass[j]);
    }
    for (int i = 0; i < n; ++i)
      if (lc.ref.tags[i].kind == VertexTag::Kind::Interior) trips.emplace_back(i, n, -1.0);
    SparseMat J(n + 1, n + 1);
    J.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<SparseMat> lu(J);
    if (lu.info() != Eigen::Success)
      fail(ErrorCode::NewtonDiverged, "singular leaf Jacobian");
    const Eigen::VectorXd delta = lu.solve(-F);

    // damped update
    double step = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 20; ++ls) {
      Eigen::VectorXd u_try = u + step * delta.head(n);
      const double l_try = lambda + step * delta[n];
      try {
        check_domain(u_try);
        std::vector<Vec3> V_try;
        const Eigen::VectorXd F_try = full_residual(u_try, l_try, V_try);
        const double fn = F_try.lpNorm<Eigen::Infinity>();
        if (fn < fnorm || fn < opts.tol) {
          u = std::move(u_try);
          lambda = l_try;
          F = F_try;
          V = std::move(V_try);
          fnorm = fn;
          ok = true;
          break;
        }
      } catch (const Error&) {
        // shrink and retry
      }
      step *= 0.5;
    }
    if (!ok) fail(ErrorCode::NewtonDiverged, "leaf Newton step failed to reduce the residual");
    leaf.increment_norms.push_back(step * delta.head(n).norm());
  }
  if (fnorm > opts.tol) fail(ErrorCode::NewtonDiverged, "leaf Newton did not converge");

  leaf.newton_iterations = iter;
  leaf.lambda = lambda;
  leaf.u = u;
  leaf.mesh = lc.ref;
  leaf.mesh.V = V;

  // certificates from the final mesh
  for (int i = 0; i < n; ++i) {
    const VertexTag& t = lc.ref.tags[i];
    if (t.kind == VertexTag::Kind::Interior)
      leaf.h_residual =
          std::max(leaf.h_residual, std::abs(ev.mean_curvature_at(V, i) - lambda));
    else if (t.kind == VertexTag::Kind::OnFace)
      leaf.angle_residual =
          std::max(leaf.angle_residual, std::abs(ev.angle_residual_at(V, i, t.index)));
  }
  const BoundaryLoop bl = boundary_loop(leaf.mesh);
  for (int j = 0; j < P.num_sides(); ++j) {
    const auto& chain = bl.face_chain[j];
    double len = 0.0;
    for (size_t i = 0; i + 1 < chain.size(); ++i)
      len += edge_length_g(field, leaf.mesh.V[chain[i]], leaf.mesh.V[chain[i + 1]]);
    leaf.C += len / std::tan(gamma[j]);
  }
  leaf.energy = energy(P, leaf.mesh, field, gamma);
  return leaf;
}

// ---------------------------------------------------------------------------
// Continuation
// ---------------------------------------------------------------------------

struct FoliationTrace {
  std::vector<LeafState> leaves;
  bool cone = false;
  std::vector<double> gamma;
  double mesh_h = 0.0;
  bool truncated = false;  // a leaf failed; trace holds the leaves solved so far
};

struct FoliateOptions {
  int steps = 20;
  double h = 1.0 / 8.0;
  LeafOptions leaf;
};

inline FoliationTrace foliate(const PolyhedralDomain& P, const MetricField& field,
                              double rho_from, double rho_to,
                              const FoliateOptions& opts = {}) {
  FoliationTrace tr;
  tr.cone = (P.kind == PolyhedralDomain::Kind::Cone);
  tr.gamma = resolve_gamma(P, opts.leaf.gamma);
  tr.mesh_h = opts.h;
  const LeafCoordinates lc = build_leaf_coordinates(P, opts.h);

  const double range = rho_to - rho_from;
  const double cap = std::abs(range) / 10.0;
  double step = std::min(std::abs(range) / opts.steps, cap) * (range > 0 ? 1.0 : -1.0);

  LeafOptions lopts = opts.leaf;
  lopts.gamma = tr.gamma;
  double rho = rho_from;
  Eigen::VectorXd warm;
  double warm_lambda = 0.0;
  int easy_streak = 0;
  try {
    tr.leaves.push_back(leaf_solve(P, field, lc, rho, warm, warm_lambda, lopts));
  } catch (const Error&) {
    tr.truncated = true;
    return tr;
  }
  warm = tr.leaves.back().u;
  warm_lambda = tr.leaves.back().lambda;

  while ((range > 0 && rho < rho_to - 1e-12) || (range < 0 && rho > rho_to + 1e-12)) {
    double next = rho + step;
    if ((range > 0 && next > rho_to) || (range < 0 && next < rho_to)) next = rho_to;
    bool solved = false;
    try {
      LeafState leaf = leaf_solve(P, field, lc, next, warm, warm_lambda, lopts);
      // lapse between consecutive leaves, signed along the surface normal
      const LeafState& prevleaf = tr.leaves.back();
      const auto normals = vertex_normals_g(prevleaf.mesh, field);
      double lapse_min = std::numeric_limits<double>::infinity();
      double lapse_sum = 0.0;
      for (int i = 0; i < leaf.mesh.nv(); ++i) {
        const Vec3 dp = leaf.mesh.V[i] - prevleaf.mesh.V[i];
        const double gap =
            dp.dot(field.eval_raw(prevleaf.mesh.V[i]) * normals[i]) / std::abs(next - rho);
        lapse_sum += gap;
        lapse_min = std::min(lapse_min, gap);
      }
      leaf.min_lapse = (lapse_sum >= 0) ? lapse_min : std::numeric_limits<double>::infinity();
      if (lapse_sum < 0) {
        // traversal runs against the normal; report the magnitude
        leaf.min_lapse = -1.0 * [&] {
          double mx = -std::numeric_limits<double>::infinity();
          for (int i = 0; i < leaf.mesh.nv(); ++i) {
            const Vec3 dp = leaf.mesh.V[i] - prevleaf.mesh.V[i];
            mx = std::max(mx, dp.dot(field.eval_raw(prevleaf.mesh.V[i]) * normals[i]) /
                                  std::abs(next - rho));
          }
          return mx;
        }();
      }
      tr.leaves.push_back(std::move(leaf));
      solved = true;
    } catch (const Error&) {
      solved = false;
    }
    if (solved) {
      rho = next;
      warm = tr.leaves.back().u;
      warm_lambda = tr.leaves.back().lambda;
      if (++easy_streak >= 3) {
        step = (std::abs(2.0 * step) > cap ? cap * (step > 0 ? 1 : -1) : 2.0 * step);
        easy_streak = 0;
      }
    } else {
      easy_streak = 0;
      step *= 0.5;
      if (std::abs(step) < std::abs(range) * 1e-4) {
        tr.truncated = true;
        break;
      }
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Dynamics of the mean curvature along the trace
// ---------------------------------------------------------------------------

struct DynamicsReport {
  std::vector<double> rho;
  std::vector<double> residual;  // H'(paper direction) - C * H per interior leaf
  double min_residual = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Residuals of the differential inequality H' >= C(rho) H, with the
// derivative taken in the direction the leaves move along their normal
// (toward the apex for cones).
inline DynamicsReport dynamics_check(const FoliationTrace& tr, const PolyhedralDomain& P,
                                     const MetricField& field, double tol_override = -1.0) {
  if (tr.leaves.size() < 3)
    fail(ErrorCode::BadConfig, "dynamics check needs at least three leaves");

  // hypotheses: nonnegative scalar curvature and mean convex side faces over
  // the swept region
  double min_R = std::numeric_limits<double>::infinity();
  for (size_t li = 0; li < tr.leaves.size(); li += std::max<size_t>(tr.leaves.size() / 5, 1)) {
    const TriSurface& M = tr.leaves[li].mesh;
    for (int i = 0; i < M.nv(); i += std::max(M.nv() / 20, 1))
      min_R = std::min(min_R, curvature_at(field, M.V[i]).scalar);
  }
  if (min_R < -1e-8) fail(ErrorCode::HypothesisFailed, "scalar curvature");
  double min_H = std::numeric_limits<double>::infinity();
  for (int j = 0; j < P.num_sides(); ++j) {
    const Face face = P.side_face(j);
    const Vec3 c = face.centroid();
    for (size_t vtx = 0; vtx < face.verts.size(); ++vtx)
      for (int is = 0; is < 4; ++is)
        min_H = std::min(min_H, face_mean_curvature(P, field, face,
                                                    c + (face.verts[vtx] - c) * (is / 5.0)));
  }
  if (min_H < -1e-6) fail(ErrorCode::HypothesisFailed, "face mean convexity");

  DynamicsReport rep;
  double drho_typ = 0.0;
  for (size_t i = 0; i + 1 < tr.leaves.size(); ++i)
    drho_typ = std::max(drho_typ, std::abs(tr.leaves[i + 1].rho - tr.leaves[i].rho));
  rep.tol = (tol_override > 0) ? tol_override : (drho_typ * drho_typ + 0.1 * tr.mesh_h);
  rep.min_residual = std::numeric_limits<double>::infinity();
  const double orient = tr.cone ? -1.0 : 1.0;  // paper direction vs traversal parameter
  for (size_t i = 1; i + 1 < tr.leaves.size(); ++i) {
    const auto &a = tr.leaves[i - 1], &b = tr.leaves[i], &c = tr.leaves[i + 1];
    const double dH = orient * (c.lambda - a.lambda) / (c.rho - a.rho);
    const double res = dH - b.C * b.lambda;
    rep.rho.push_back(b.rho);
    rep.residual.push_back(res);
    rep.min_residual = std::min(rep.min_residual, res);
  }
  rep.pass = rep.min_residual >= -rep.tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Evolution checks for normal variations
// ---------------------------------------------------------------------------

struct EvolutionCheck {
  double dH_abs = 0.0;      // interior mean-curvature evolution, sup error
  double dH_scale = 0.0;    // sup of the assembled right-hand side
  double dAngle_abs = 0.0;  // boundary contact-angle evolution
  double dAngle_scale = 0.0;
  double dN_abs = 0.0;      // normal-vector evolution
  double dN_scale = 0.0;

  static double rel(double err, double scale) { return err / std::max(scale, 1e-14); }
  double dH_rel() const { return rel(dH_abs, dH_scale); }
  double dAngle_rel() const { return rel(dAngle_abs, dAngle_scale); }
  double dN_rel() const { return rel(dN_abs, dN_scale); }
};

// Compares finite-difference evolution of H, <N,X> and N under an admissible
// variation of normal speed f against the assembled linearizations
// (Laplacian + curvature potential in the interior, Robin data on the
// boundary, surface gradient for the normal).
inline EvolutionCheck evolution_lemma_check(const PolyhedralDomain& P,
                                            const MetricField& field, const TriSurface& S,
                                            const std::function<double(const Vec3&)>& f_fn,
                                            double dt = 1e-3, double h_inf_bound = 0.05) {
  const GeometryReport rep = geometry_report(P, S, field);
  if (rep.max_interior_abs_H() > h_inf_bound)
    fail(ErrorCode::NotMinimal, "evolution checks require an approximately minimal surface");
  const BoundaryLoop bl = boundary_loop(S);
  const auto adj = S.vertex_adjacency();
  const int n = S.nv();

  Eigen::VectorXd f(n);
  for (int v = 0; v < n; ++v) f[v] = f_fn(S.V[v]);

  // admissible velocity with normal speed f
  std::vector<Vec3> W(n);
  for (int v = 0; v < n; ++v) {
    const VertexTag& t = S.tags[v];
    if (t.kind == VertexTag::Kind::Interior) {
      W[v] = f[v] * rep.normal[v];
    } else if (t.kind == VertexTag::Kind::OnFace) {
      const BoundaryFrame fr = boundary_frame(P, S, field, bl, adj, rep.normal, v, t.index);
      const double sg = std::sin(rep.contact_angle[v]);
      W[v] = -(f[v] / sg) * fr.face_conormal;
    } else {
      const Vec3 e = P.lateral_edge(t.index).dir();
      const double en = e.dot(field.eval_raw(S.V[v]) * rep.normal[v]);
      W[v] = (f[v] / en) * e;
    }
  }

  TriSurface Sp = S, Sm = S;
  for (int v = 0; v < n; ++v) {
    Sp.V[v] += dt * W[v];
    Sm.V[v] -= dt * W[v];
  }

  // interior: dH/dt against lap f + (Ric(N,N) + |A|^2) f
  const auto Hp = mean_curvature_vertexwise(Sp, field);
  const auto Hm = mean_curvature_vertexwise(Sm, field);
  const SparseMat K = build_stiffness(S, field);
  const Eigen::VectorXd Kf = K * f;
  const auto mass = lumped_areas(S, field);

  EvolutionCheck out;
  double rhs_max = 0.0, err_max = 0.0;
  for (int v = 0; v < n; ++v) {
    if (!rep.interior[v]) continue;
    const CurvatureTensors ct = curvature_at(field, S.V[v]);
    const double pot = rep.abs_A2[v] + ct.ric(rep.normal[v], rep.normal[v]);
    const double rhs = -Kf[v] / mass[v] + pot * f[v];
    const double lhs = (Hp[v] - Hm[v]) / (2.0 * dt);
    rhs_max = std::max(rhs_max, std::abs(rhs));
    err_max = std::max(err_max, std::abs(lhs - rhs));
  }
  out.dH_scale = rhs_max;
  out.dH_abs = err_max;

  // P1 surface gradient of f at a vertex (area-weighted triangle gradients)
  const auto vf = S.vertex_faces();
  auto surface_gradient = [&](int v) {
    Vec3 acc = Vec3::Zero();
    double wsum = 0.0;
    for (int t : vf[v]) {
      const auto& tri = S.F[t];
      const Vec3 e1 = S.V[tri[1]] - S.V[tri[0]], e2 = S.V[tri[2]] - S.V[tri[0]];
      const Vec3 c = (S.V[tri[0]] + S.V[tri[1]] + S.V[tri[2]]) / 3.0;
      const Mat3 G = field.eval_raw(c);
      Mat2 gram;
      gram << e1.dot(G * e1), e1.dot(G * e2), e1.dot(G * e2), e2.dot(G * e2);
      const Vec2 rhs2(f[tri[1]] - f[tri[0]], f[tri[2]] - f[tri[0]]);
      const Vec2 ab = gram.inverse() * rhs2;
      const Vec3 grad = ab[0] * e1 + ab[1] * e2;
      const double area = tri_area_g(field, S.V[tri[0]], S.V[tri[1]], S.V[tri[2]], false).area;
      acc += area * grad;
      wsum += area;
    }
    return Vec3(acc / wsum);
  };

  // boundary: d<N,X>/dt against -sin(g) df/dnu + (cos(g) A(nu,nu) + II) f
  const auto normals_p = vertex_normals_g(Sp, field);
  const auto normals_m = vertex_normals_g(Sm, field);
  double arhs_max = 0.0, aerr_max = 0.0;
  for (int j = 0; j < P.num_sides(); ++j) {
    const Face face = P.side_face(j);
    const auto& chain = bl.face_chain[j];
    for (size_t i = 1; i + 1 < chain.size(); ++i) {
      const int v = chain[i];
      const double g = rep.contact_angle[v];
      const BoundaryFrame fr = boundary_frame(P, S, field, bl, adj, rep.normal, v, j);
      const double dfdnu = surface_gradient(v).dot(field.eval_raw(S.V[v]) * fr.conormal);
      const double A_nn = rep.fits[v].quad(fr.conormal);
      const double II_bb = face_second_fundamental_form(field, face, S.V[v], fr.face_conormal);
      const double rhs = -std::sin(g) * dfdnu + (std::cos(g) * A_nn + II_bb) * f[v];
      const Vec3 Xp = face_unit_normal_g(field, face, Sp.V[v]);
      const Vec3 Xm = face_unit_normal_g(field, face, Sm.V[v]);
      const double ap = normals_p[v].dot(field.eval_raw(Sp.V[v]) * Xp);
      const double am = normals_m[v].dot(field.eval_raw(Sm.V[v]) * Xm);
      const double lhs = (ap - am) / (2.0 * dt);
      arhs_max = std::max(arhs_max, std::abs(rhs));
      aerr_max = std::max(aerr_max, std::abs(lhs - rhs));
    }
  }
  out.dAngle_scale = arhs_max;
  out.dAngle_abs = aerr_max;

  // normal evolution: covariant dN/dt against -grad f (tangential part
  // vanishes for interior vertices under a pure normal variation)
  double nrhs_max = 0.0, nerr_max = 0.0;
  const auto gam_cache = [&](const Vec3& x) { return christoffel_at(field, x); };
  for (int v = 0; v < n; ++v) {
    if (!rep.interior[v]) continue;
    const auto gam = gam_cache(S.V[v]);
    Vec3 dN = (normals_p[v] - normals_m[v]) / (2.0 * dt);
    for (int kk = 0; kk < 3; ++kk) dN[kk] += W[v].dot(gam[kk] * rep.normal[v]);
    const Vec3 rhs = -surface_gradient(v);
    nrhs_max = std::max(nrhs_max, rhs.norm());
    nerr_max = std::max(nerr_max, (dN - rhs).norm());
  }
  out.dN_scale = nrhs_max;
  out.dN_abs = nerr_max;
  return out;
}

}  // namespace polyscal
