#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <utility>

#include "polyscal/common.hpp"

namespace polyscal {

// A Riemannian metric on a box region of R^3, given as a pure evaluator of
// the component matrix plus optional first/second derivative evaluators.
// When derivatives are absent they are formed by second-order central
// differences with step h_fd. All evaluators must be thread-safe.
struct MetricField {
  using Eval = std::function<Mat3(const Vec3&)>;
  using EvalD1 = std::function<std::array<Mat3, 3>(const Vec3&)>;   // d/dx_k g
  using EvalD2 = std::function<std::array<Mat3, 9>(const Vec3&)>;   // d2 g, index 3k+l

  Eval g;
  EvalD1 dg;    // optional
  EvalD2 d2g;   // optional
  Box3 box;
  double h_fd = 1e-3;
  std::string name = "custom";

  bool has_d1() const { return static_cast<bool>(dg); }
  bool has_d2() const { return static_cast<bool>(d2g); }

  Mat3 eval_raw(const Vec3& x) const { return g(x); }

  // Checked evaluation: inside the box and SPD.
  Mat3 eval(const Vec3& x) const {
    if (!box.contains(x)) fail(ErrorCode::OutOfDomain, "metric queried outside its box");
    Mat3 G = g(x);
    Eigen::LLT<Mat3> llt(G);
    if (llt.info() != Eigen::Success)
      fail(ErrorCode::NotSPD, "metric matrix is not positive definite");
    return G;
  }

  std::array<Mat3, 3> d1(const Vec3& x) const {
    if (dg) return dg(x);
    std::array<Mat3, 3> out;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h_fd;
      out[k] = (g(x + e) - g(x - e)) / (2.0 * h_fd);
    }
    return out;
  }

  std::array<Mat3, 9> d2(const Vec3& x) const {
    if (d2g) return d2g(x);
    std::array<Mat3, 9> out;
    if (dg) {
      for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = h_fd;
        auto hi = dg(x + e), lo = dg(x - e);
        for (int l = 0; l < 3; ++l) out[3 * k + l] = (hi[l] - lo[l]) / (2.0 * h_fd);
      }
      // symmetrize mixed entries
      for (int k = 0; k < 3; ++k)
        for (int l = k + 1; l < 3; ++l) {
          Mat3 s = 0.5 * (out[3 * k + l] + out[3 * l + k]);
          out[3 * k + l] = s;
          out[3 * l + k] = s;
        }
      return out;
    }
    const Mat3 g0 = g(x);
    for (int k = 0; k < 3; ++k) {
      Vec3 ek = Vec3::Zero();
      ek[k] = h_fd;
      out[3 * k + k] = (g(x + ek) - 2.0 * g0 + g(x - ek)) / (h_fd * h_fd);
      for (int l = k + 1; l < 3; ++l) {
        Vec3 el = Vec3::Zero();
        el[l] = h_fd;
        Mat3 m = (g(x + ek + el) - g(x + ek - el) - g(x - ek + el) + g(x - ek - el)) /
                 (4.0 * h_fd * h_fd);
        out[3 * k + l] = m;
        out[3 * l + k] = m;
      }
    }
    return out;
  }

  // Largest stencil offset used by d1/d2 when finite differencing.
  double stencil_reach() const { return (dg && d2g) ? 0.0 : 2.0 * h_fd; }

  void require_stencil(const Vec3& x) const {
    const double reach = stencil_reach();
    if (!box.contains(x)) fail(ErrorCode::OutOfDomain, "point outside metric box");
    if (reach > 0.0 && !box.contains(x, reach))
      fail(ErrorCode::StencilClipped, "finite-difference stencil exits metric box");
  }
};

// Drops analytic derivative evaluators so everything goes through finite
// differences; used by convergence studies.
inline MetricField strip_derivatives(MetricField f) {
  f.dg = nullptr;
  f.d2g = nullptr;
  return f;
}

// Curvature data of the metric at one point. Index conventions:
//   christoffel[k](i,j) = Gamma^k_ij
//   riemann_up[r][s][m][n] = R^r_{smn}, the coefficient of
//   R(d_m, d_n) d_s along d_r. Ricci_{sn} = R^m_{smn}.
// The unit sphere in flat R^3 has positive curvature in this convention.
struct CurvatureTensors {
  Vec3 x;
  Mat3 metric;
  Mat3 metric_inv;
  std::array<Mat3, 3> christoffel;
  double riemann_up[3][3][3][3];
  Mat3 ricci;
  double scalar = 0.0;

  // <R(u,v)w, z> with all inputs plain coordinate vectors.
  double rm(const Vec3& u, const Vec3& v, const Vec3& w, const Vec3& z) const {
    Vec3 zl = metric * z;
    double acc = 0.0;
    for (int r = 0; r < 3; ++r)
      for (int s = 0; s < 3; ++s)
        for (int m = 0; m < 3; ++m)
          for (int n = 0; n < 3; ++n)
            acc += zl[r] * riemann_up[r][s][m][n] * w[s] * u[m] * v[n];
    return acc;
  }

  double sectional(const Vec3& u, const Vec3& v) const {
    const double gu = u.dot(metric * u), gv = v.dot(metric * v), guv = u.dot(metric * v);
    return rm(u, v, v, u) / (gu * gv - guv * guv);
  }

  double ric(const Vec3& u, const Vec3& v) const { return u.dot(ricci * v); }
};

inline CurvatureTensors curvature_at(const MetricField& field, const Vec3& x) {
  field.require_stencil(x);
  CurvatureTensors ct;
  ct.x = x;
  ct.metric = field.eval(x);
  ct.metric_inv = ct.metric.inverse();
  const auto dG = field.d1(x);
  const auto d2G = field.d2(x);
  const Mat3& gi = ct.metric_inv;

  // Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
  for (int k = 0; k < 3; ++k) {
    Mat3 gam = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int l = 0; l < 3; ++l)
          s += gi(k, l) * (dG[i](j, l) + dG[j](i, l) - dG[l](i, j));
        gam(i, j) = 0.5 * s;
      }
    ct.christoffel[k] = gam;
  }

  // dGamma[m][r](n,s) = d_m Gamma^r_{ns}
  std::array<Mat3, 3> dgi;  // d_k g^{-1} = -g^{-1} dG[k] g^{-1}
  for (int k = 0; k < 3; ++k) dgi[k] = -gi * dG[k] * gi;
  double dGam[3][3][3][3];
  for (int m = 0; m < 3; ++m)
    for (int r = 0; r < 3; ++r)
      for (int n = 0; n < 3; ++n)
        for (int s = 0; s < 3; ++s) {
          double acc = 0.0;
          for (int l = 0; l < 3; ++l) {
            acc += 0.5 * dgi[m](r, l) * (dG[n](s, l) + dG[s](n, l) - dG[l](n, s));
            acc += 0.5 * gi(r, l) *
                   (d2G[3 * m + n](s, l) + d2G[3 * m + s](n, l) - d2G[3 * m + l](n, s));
          }
          dGam[m][r][n][s] = acc;
        }

  // R^r_{smn} = d_m Gamma^r_{ns} - d_n Gamma^r_{ms}
  //           + Gamma^r_{ml} Gamma^l_{ns} - Gamma^r_{nl} Gamma^l_{ms}
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s)
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n) {
          double acc = dGam[m][r][n][s] - dGam[n][r][m][s];
          for (int l = 0; l < 3; ++l)
            acc += ct.christoffel[r](m, l) * ct.christoffel[l](n, s) -
                   ct.christoffel[r](n, l) * ct.christoffel[l](m, s);
          ct.riemann_up[r][s][m][n] = acc;
        }

  for (int s = 0; s < 3; ++s)
    for (int n = 0; n < 3; ++n) {
      double acc = 0.0;
      for (int m = 0; m < 3; ++m) acc += ct.riemann_up[m][s][m][n];
      ct.ricci(s, n) = acc;
    }
  ct.ricci = 0.5 * (ct.ricci + ct.ricci.transpose()).eval();
  ct.scalar = (gi * ct.ricci).trace();
  return ct;
}

struct ScalarSignReport {
  double min_scalar = 0.0;
  Vec3 argmin = Vec3::Zero();
  bool pass = false;
  double tol = 0.0;
  int samples = 0;
};

inline ScalarSignReport verify_scalar_sign(const MetricField& field,
                                           const std::vector<Vec3>& points,
                                           double tol = 1e-8) {
  if (points.empty()) fail(ErrorCode::BadConfig, "verify_scalar_sign: empty sample set");
  ScalarSignReport rep;
  rep.tol = tol;
  rep.samples = static_cast<int>(points.size());
  rep.min_scalar = std::numeric_limits<double>::infinity();
  for (const Vec3& p : points) {
    const double R = curvature_at(field, p).scalar;
    if (R < rep.min_scalar) {
      rep.min_scalar = R;
      rep.argmin = p;
    }
  }
  rep.pass = rep.min_scalar >= -tol;
  return rep;
}

// Checks supplied analytic derivatives against central differences of the
// component evaluator; returns the worst absolute deviation found.
inline double validate_derivatives(const MetricField& field, const std::vector<Vec3>& pts) {
  double worst = 0.0;
  MetricField fd = strip_derivatives(field);
  for (const Vec3& x : pts) {
    if (!field.box.contains(x, 2.0 * field.h_fd)) continue;
    if (field.has_d1()) {
      auto a = field.d1(x), b = fd.d1(x);
      for (int k = 0; k < 3; ++k) worst = std::max(worst, (a[k] - b[k]).cwiseAbs().maxCoeff());
    }
    if (field.has_d2()) {
      auto a = field.d2(x), b = fd.d2(x);
      for (int k = 0; k < 9; ++k) worst = std::max(worst, (a[k] - b[k]).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Built-in metric catalog
// ---------------------------------------------------------------------------

inline MetricField make_flat(const Box3& box) {
  MetricField f;
  f.name = "flat";
  f.box = box;
  f.h_fd = 1e-3 * box.diameter();
  f.g = [](const Vec3&) { return Mat3::Identity(); };
  f.dg = [](const Vec3&) { return std::array<Mat3, 3>{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()}; };
  f.d2g = [](const Vec3&) {
    std::array<Mat3, 9> z;
    z.fill(Mat3::Zero());
    return z;
  };
  return f;
}

// g = u^4 delta with u = 1 + eps * exp(-|x-c|^2 / sigma^2).
inline MetricField make_conformal_gaussian(double eps, double sigma, const Box3& box,
                                           const Vec3& center = Vec3::Zero()) {
  MetricField f;
  f.name = "conformal_gaussian";
  f.box = box;
  f.h_fd = 1e-3 * box.diameter();
  const double s2 = sigma * sigma;
  auto u_all = [eps, s2, center](const Vec3& x, double& u, Vec3& du, Mat3& d2u) {
    const Vec3 d = x - center;
    const double e = eps * std::exp(-d.squaredNorm() / s2);
    u = 1.0 + e;
    du = e * (-2.0 / s2) * d;
    d2u = e * (4.0 / (s2 * s2)) * (d * d.transpose()) - e * (2.0 / s2) * Mat3::Identity();
  };
  f.g = [u_all](const Vec3& x) {
    double u;
    Vec3 du;
    Mat3 d2u;
    u_all(x, u, du, d2u);
    return Mat3(std::pow(u, 4) * Mat3::Identity());
  };
  f.dg = [u_all](const Vec3& x) {
    double u;
    Vec3 du;
    Mat3 d2u;
    u_all(x, u, du, d2u);
    std::array<Mat3, 3> out;
    for (int k = 0; k < 3; ++k) out[k] = 4.0 * std::pow(u, 3) * du[k] * Mat3::Identity();
    return out;
  };
  f.d2g = [u_all](const Vec3& x) {
    double u;
    Vec3 du;
    Mat3 d2u;
    u_all(x, u, du, d2u);
    std::array<Mat3, 9> out;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        out[3 * k + l] = (12.0 * u * u * du[k] * du[l] + 4.0 * std::pow(u, 3) * d2u(k, l)) *
                         Mat3::Identity();
    return out;
  };
  return f;
}

// Diagonal, non-conformal test metric: g_ii = 1 + eps * w_i * exp(-|x|^2)
// with fixed unequal weights so the anisotropy is genuine.
inline MetricField make_diag_perturb(double eps, const Box3& box) {
  MetricField f;
  f.name = "diag_perturb";
  f.box = box;
  f.h_fd = 1e-3 * box.diameter();
  const Vec3 w(1.0, 0.6, 0.3);
  auto bump = [](const Vec3& x, double& b, Vec3& db, Mat3& d2b) {
    b = std::exp(-x.squaredNorm());
    db = -2.0 * b * x;
    d2b = b * (4.0 * x * x.transpose() - 2.0 * Mat3::Identity());
  };
  f.g = [w, bump, eps](const Vec3& x) {
    double b;
    Vec3 db;
    Mat3 d2b;
    bump(x, b, db, d2b);
    Mat3 G = Mat3::Identity();
    for (int i = 0; i < 3; ++i) G(i, i) += eps * w[i] * b;
    return G;
  };
  f.dg = [w, bump, eps](const Vec3& x) {
    double b;
    Vec3 db;
    Mat3 d2b;
    bump(x, b, db, d2b);
    std::array<Mat3, 3> out;
    for (int k = 0; k < 3; ++k) {
      Mat3 m = Mat3::Zero();
      for (int i = 0; i < 3; ++i) m(i, i) = eps * w[i] * db[k];
      out[k] = m;
    }
    return out;
  };
  f.d2g = [w, bump, eps](const Vec3& x) {
    double b;
    Vec3 db;
    Mat3 d2b;
    bump(x, b, db, d2b);
    std::array<Mat3, 9> out;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) {
        Mat3 m = Mat3::Zero();
        for (int i = 0; i < 3; ++i) m(i, i) = eps * w[i] * d2b(k, l);
        out[3 * k + l] = m;
      }
    return out;
  };
  return f;
}

}  // namespace polyscal
