#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "polyscal/capillary_solver.hpp"
#include "polyscal/common.hpp"
#include "polyscal/domain.hpp"
#include "polyscal/surface_mesh.hpp"

namespace polyscal {

using SparseMat = Eigen::SparseMatrix<double>;

// Cotangent stiffness matrix of the induced metric, built from intrinsic
// g-edge lengths so it matches the angle bookkeeping elsewhere.
inline SparseMat build_stiffness(const TriSurface& S, const MetricField& field) {
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& t : S.F) {
    const double l01 = edge_length_g(field, S.V[t[0]], S.V[t[1]]);
    const double l12 = edge_length_g(field, S.V[t[1]], S.V[t[2]]);
    const double l20 = edge_length_g(field, S.V[t[2]], S.V[t[0]]);
    const auto ang = detail::tri_angles_from_lengths(l12, l20, l01);
    // cotangent of the angle opposite each edge
    const double w01 = 0.5 / std::tan(ang[2]);
    const double w12 = 0.5 / std::tan(ang[0]);
    const double w20 = 0.5 / std::tan(ang[1]);
    auto add = [&](int a, int b, double w) {
      trips.emplace_back(a, a, w);
      trips.emplace_back(b, b, w);
      trips.emplace_back(a, b, -w);
      trips.emplace_back(b, a, -w);
    };
    add(t[0], t[1], w01);
    add(t[1], t[2], w12);
    add(t[2], t[0], w20);
  }
  SparseMat K(S.nv(), S.nv());
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

// Second-variation quadratic form of the capillary energy at an
// (approximately) minimal surface:
//   Q(f,f) = int |grad f|^2 - (|A|^2 + Ric(N,N)) f^2 - bdry Robin f^2.
struct StabilityOperator {
  SparseMat stiffness;
  Eigen::VectorXd mass;        // lumped vertex areas
  Eigen::VectorXd potential;   // |A|^2 + Ric(N,N) per vertex
  Eigen::VectorXd robin;       // integrated Robin coefficient per boundary vertex
  SparseMat form;              // stiffness - diag(mass*potential) - diag(robin)
  double corner_adjacent_robin = 0.0;  // share of the Robin integral next to corners

  double quad(const Eigen::VectorXd& f) const { return f.dot(form * f); }
};

inline StabilityOperator assemble(const PolyhedralDomain& P, const TriSurface& S,
                                  const MetricField& field,
                                  const std::vector<double>& gamma_in = {},
                                  double h_inf_bound = 0.05) {
  const auto gamma = resolve_gamma(P, gamma_in);
  const GeometryReport rep = geometry_report(P, S, field);
  if (rep.max_interior_abs_H() > h_inf_bound)
    fail(ErrorCode::NotMinimal, "stability form requires an approximately minimal surface");

  StabilityOperator op;
  op.stiffness = build_stiffness(S, field);
  op.mass = Eigen::VectorXd::Zero(S.nv());
  {
    const auto m = lumped_areas(S, field);
    for (int v = 0; v < S.nv(); ++v) op.mass[v] = m[v];
  }
  op.potential = Eigen::VectorXd::Zero(S.nv());
  for (int v = 0; v < S.nv(); ++v) {
    const CurvatureTensors ct = curvature_at(field, S.V[v]);
    op.potential[v] = rep.abs_A2[v] + ct.ric(rep.normal[v], rep.normal[v]);
  }

  op.robin = Eigen::VectorXd::Zero(S.nv());
  const BoundaryLoop bl = boundary_loop(S);
  const auto adj = S.vertex_adjacency();
  for (int j = 0; j < P.num_sides(); ++j) {
    const Face face = P.side_face(j);
    const auto& chain = bl.face_chain[j];
    const double sg = std::sin(gamma[j]), cg = std::cos(gamma[j]);
    // pointwise Robin coefficient at each chain vertex, using the face-j frame
    std::vector<double> q(chain.size());
    for (size_t i = 0; i < chain.size(); ++i) {
      const int v = chain[i];
      const BoundaryFrame fr = boundary_frame(P, S, field, bl, adj, rep.normal, v, j);
      const double II_bb = face_second_fundamental_form(field, face, S.V[v], fr.face_conormal);
      const double A_nn = rep.fits[v].quad(fr.conormal);
      q[i] = II_bb / sg + A_nn * cg / sg;
    }
    // per-segment trapezoid integration; corners carry no extra point mass
    for (size_t i = 0; i + 1 < chain.size(); ++i) {
      const double len = edge_length_g(field, S.V[chain[i]], S.V[chain[i + 1]]);
      op.robin[chain[i]] += 0.5 * len * q[i];
      op.robin[chain[i + 1]] += 0.5 * len * q[i + 1];
      if (S.tags[chain[i]].kind == VertexTag::Kind::OnEdge ||
          S.tags[chain[i + 1]].kind == VertexTag::Kind::OnEdge)
        op.corner_adjacent_robin += 0.5 * len * (q[i] + q[i + 1]);
    }
  }

  SparseMat D(S.nv(), S.nv());
  std::vector<Eigen::Triplet<double>> trips;
  for (int v = 0; v < S.nv(); ++v)
    trips.emplace_back(v, v, op.mass[v] * op.potential[v] + op.robin[v]);
  D.setFromTriplets(trips.begin(), trips.end());
  op.form = op.stiffness - D;
  return op;
}

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXd vector;
  double residual = 0.0;
};

// Smallest generalized eigenpairs of (form, diag(mass)) by shifted inverse
// power iteration with deflation; the shift starts below a Gershgorin bound,
// so the iteration walks up from the bottom of the spectrum.
inline std::vector<EigenPair> min_eigenvalues(const StabilityOperator& op, int count = 1) {
  const int n = static_cast<int>(op.mass.size());
  double lb = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (SparseMat::InnerIterator it(op.form, i); it; ++it)
      if (it.row() != i) row += std::abs(it.value());
    double diag = op.form.coeff(i, i);
    lb = std::min(lb, (diag - row) / op.mass[i]);
  }
  double sigma = lb - 0.1 * (std::abs(lb) + 1.0);

  SparseMat M(n, n);
  {
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, op.mass[i]);
    M.setFromTriplets(trips.begin(), trips.end());
  }

  std::vector<EigenPair> found;
  for (int which = 0; which < count; ++which) {
    Eigen::SimplicialLDLT<SparseMat> solver;
    double shift = sigma;
    solver.compute(op.form - shift * M);
    if (solver.info() != Eigen::Success) {
      shift = sigma - 0.37 * (std::abs(sigma) + 1.0);  // reshift and retry once
      solver.compute(op.form - shift * M);
      if (solver.info() != Eigen::Success)
        fail(ErrorCode::SolverBreakdown, "singular shifted operator");
    }
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
    x[0] += 0.5;  // break symmetry deterministically
    auto m_orth = [&](Eigen::VectorXd& v) {
      for (const auto& p : found) {
        const double c = p.vector.dot(M * v);
        v -= c * p.vector;
      }
    };
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
      m_orth(x);
      Eigen::VectorXd y = solver.solve(M * x);
      m_orth(y);
      const double ny = std::sqrt(y.dot(M * y));
      if (!(ny > 0) || !std::isfinite(ny))
        fail(ErrorCode::SolverBreakdown, "inverse iteration collapsed");
      x = y / ny;
      lambda = x.dot(op.form * x) / x.dot(M * x);
      const double res = (op.form * x - lambda * M * x).norm() / (M * x).norm();
      if (res < 1e-10) break;
    }
    EigenPair pair;
    pair.value = lambda;
    // sign fixed by positive mass-weighted mean
    if (x.dot(op.mass) < 0) x = -x;
    pair.vector = x / std::sqrt(x.dot(M * x));
    pair.residual = (op.form * pair.vector - lambda * M * pair.vector).norm() /
                    (M * pair.vector).norm();
    found.push_back(std::move(pair));
  }
  return found;
}

inline EigenPair min_eigenvalue(const StabilityOperator& op) {
  return min_eigenvalues(op, 1)[0];
}

// ---------------------------------------------------------------------------
// Rigidity certificate
// ---------------------------------------------------------------------------

struct RigidityCertificate {
  double scalar_curvature = 0.0;  // max |R| sampled on the surface
  double shape_norm = 0.0;        // max |A|
  double face_mean = 0.0;         // max |Hbar| along the contact lines
  double corner_angle = 0.0;      // max |alpha_j - alpha'_j|
  double ric_normal = 0.0;        // max |Ric(N,N)|
  double gauss = 0.0;             // max |K| (pointwise angle defect)
  double geodesic = 0.0;          // max |k_g|

  double max_residual() const {
    return std::max({scalar_curvature, shape_norm, face_mean, corner_angle, ric_normal,
                     gauss, geodesic});
  }
  bool rigid(double tol) const { return max_residual() <= tol; }
};

inline RigidityCertificate rigidity_certificate(const PolyhedralDomain& P, const TriSurface& S,
                                                const MetricField& field,
                                                const ModelAngles& model) {
  const GeometryReport rep = geometry_report(P, S, field);
  const BoundaryLoop bl = boundary_loop(S);
  RigidityCertificate cert;
  for (int v = 0; v < S.nv(); ++v) {
    const CurvatureTensors ct = curvature_at(field, S.V[v]);
    cert.scalar_curvature = std::max(cert.scalar_curvature, std::abs(ct.scalar));
    cert.ric_normal =
        std::max(cert.ric_normal, std::abs(ct.ric(rep.normal[v], rep.normal[v])));
    cert.shape_norm = std::max(cert.shape_norm, std::sqrt(rep.abs_A2[v]));
    if (rep.interior[v])
      cert.gauss = std::max(cert.gauss,
                            std::abs(rep.defect_mass[v] / rep.lumped_mass[v]));
  }
  for (int j = 0; j < P.num_sides(); ++j) {
    const Face face = P.side_face(j);
    const auto& chain = bl.face_chain[j];
    for (size_t i = 1; i + 1 < chain.size(); ++i) {
      const int v = chain[i];
      cert.face_mean =
          std::max(cert.face_mean, std::abs(face_mean_curvature(P, field, face, S.V[v])));
      cert.geodesic = std::max(cert.geodesic, std::abs(rep.kg_point[v]));
    }
    cert.corner_angle =
        std::max(cert.corner_angle, std::abs(rep.alpha_tangent[j] - model.alpha_base[j]));
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Comparison verifier
// ---------------------------------------------------------------------------

struct ComparisonLedger {
  bool hypotheses_ok = false;
  std::string failed_hypothesis;

  double min_scalar = 0.0;         // min sampled R over the solid
  double min_face_mean = 0.0;      // min sampled Hbar over the side faces
  double base_min_mean = 0.0;      // informational: min Hbar over the base face(s)
  double min_edge_margin = 0.0;    // min (measured angle - lower bound) over edges

  double q_constant = 0.0;         // second-variation form at f = 1
  double int_gauss = 0.0;          // integral of K (angle defect)
  double int_kg = 0.0;             // boundary turning integral without corners
  double corner_deficit = 0.0;     // sum (pi - alpha_j)
  double l_interior = 0.0;         // int 1/2 (R + |A|^2)
  double l_boundary = 0.0;         // sum 1/sin(gamma_j) int Hbar
  double l_total = 0.0;
  double tol = 0.0;
  std::string verdict;             // "consistent" | "counterexample-flag"

  EnergyReport solve_report;
};

struct ComparisonOptions {
  double h = 1.0 / 8.0;
  double init_t = 0.5;
  SolverOptions solver;
  int solid_samples = 4;           // per-axis sampling of the interior
  int face_samples = 4;
  double scalar_tol = 1e-8;
  double mean_convex_tol = 1e-6;
};

inline ComparisonLedger comparison_verdict(const PolyhedralDomain& P, const MetricField& field,
                                           const ComparisonOptions& opts = {}) {
  ComparisonLedger led;
  const auto gamma = resolve_gamma(P, opts.solver.gamma);

  // hypothesis: nonnegative scalar curvature over interior samples
  std::vector<Vec3> solid;
  for (int it = 1; it <= opts.solid_samples; ++it) {
    const double t = it / (opts.solid_samples + 1.0);
    const auto poly = slice_polygon(P, t);
    Vec3 c = Vec3::Zero();
    for (const auto& p : poly) c += p;
    c /= static_cast<double>(poly.size());
    for (const auto& p : poly)
      for (int is = 1; is <= opts.solid_samples; ++is)
        solid.push_back(c + (p - c) * (is / (opts.solid_samples + 1.0)));
    solid.push_back(c);
  }
  const auto sign_rep = verify_scalar_sign(field, solid, opts.scalar_tol);
  led.min_scalar = sign_rep.min_scalar;
  if (!sign_rep.pass) {
    led.failed_hypothesis = "scalar curvature";
    led.verdict = "hypothesis-failed";
    return led;
  }

  // hypothesis: mean convex side faces
  led.min_face_mean = std::numeric_limits<double>::infinity();
  for (int j = 0; j < P.num_sides(); ++j) {
    const Face face = P.side_face(j);
    const Vec3 c = face.centroid();
    for (size_t vtx = 0; vtx < face.verts.size(); ++vtx)
      for (int is = 0; is <= opts.face_samples; ++is) {
        const Vec3 x = c + (face.verts[vtx] - c) * (is / (opts.face_samples + 1.0));
        led.min_face_mean =
            std::min(led.min_face_mean, face_mean_curvature(P, field, face, x));
      }
  }
  if (led.min_face_mean < -opts.mean_convex_tol) {
    led.failed_hypothesis = "face mean convexity";
    led.verdict = "hypothesis-failed";
    return led;
  }
  // base faces enter the obstacle handling, not the comparison hypotheses;
  // their convexity is reported but not gated
  led.base_min_mean = std::numeric_limits<double>::infinity();
  for (int id = P.num_sides(); id < P.face_count(); ++id) {
    const Face face = P.face(id);
    const Vec3 c = face.centroid();
    for (size_t vtx = 0; vtx < face.verts.size(); ++vtx)
      for (int is = 0; is <= opts.face_samples; ++is) {
        const Vec3 x = c + (face.verts[vtx] - c) * (is / (opts.face_samples + 1.0));
        led.base_min_mean = std::min(led.base_min_mean, face_mean_curvature(P, field, face, x));
      }
  }

  // hypothesis: dihedral angles clear the lower window bound
  const auto hyp = check_hypotheses(P, field, gamma);
  led.min_edge_margin = std::numeric_limits<double>::infinity();
  for (const auto& e : hyp.edges)
    led.min_edge_margin = std::min(led.min_edge_margin, e.min_angle - e.lower_bound);
  if (!hyp.angle_bound_ok) {
    led.failed_hypothesis = "edge angle bound";
    led.verdict = "hypothesis-failed";
    return led;
  }
  led.hypotheses_ok = true;

  // solve for the minimizer
  SolverOptions sopts = opts.solver;
  sopts.gamma = gamma;
  const TriSurface init = build_slice_mesh(P, opts.init_t, opts.h);
  MinimizeResult sol = minimize(P, field, init, sopts);
  led.solve_report = sol.report;
  const TriSurface& S = sol.surface;

  // ledger quantities
  const GeometryReport rep = geometry_report(P, S, field);
  const StabilityOperator op = assemble(P, S, field, gamma, 1.0);
  led.q_constant = Eigen::VectorXd::Ones(S.nv()).dot(op.form * Eigen::VectorXd::Ones(S.nv()));
  for (int v = 0; v < S.nv(); ++v)
    if (rep.interior[v]) led.int_gauss += rep.defect_mass[v];
  const BoundaryLoop bl = boundary_loop(S);
  double corner_turn = 0.0;
  for (size_t j = 0; j < rep.alpha_intrinsic.size(); ++j)
    corner_turn += kPi - rep.alpha_intrinsic[j];
  for (int v : bl.loop)
    led.int_kg += rep.defect_mass[v];
  led.int_kg -= corner_turn;
  for (size_t j = 0; j < rep.alpha_tangent.size(); ++j)
    led.corner_deficit += kPi - rep.alpha_tangent[j];

  for (int v = 0; v < S.nv(); ++v) {
    const CurvatureTensors ct = curvature_at(field, S.V[v]);
    led.l_interior += 0.5 * (ct.scalar + rep.abs_A2[v]) * rep.lumped_mass[v];
  }
  for (int j = 0; j < P.num_sides(); ++j) {
    const Face face = P.side_face(j);
    const auto& chain = bl.face_chain[j];
    double acc = 0.0;
    for (size_t i = 0; i + 1 < chain.size(); ++i) {
      const double len = edge_length_g(field, S.V[chain[i]], S.V[chain[i + 1]]);
      const Vec3 mid = 0.5 * (S.V[chain[i]] + S.V[chain[i + 1]]);
      acc += len * face_mean_curvature(P, field, face, mid);
    }
    led.l_boundary += acc / std::sin(gamma[j]);
  }
  led.l_total = led.l_interior + led.l_boundary;
  led.tol = 10.0 * opts.h;
  led.verdict = (led.l_total >= -led.tol) ? "consistent" : "counterexample-flag";
  return led;
}

}  // namespace polyscal
