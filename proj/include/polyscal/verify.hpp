#pragma once

#include <chrono>
#include <random>

#include "polyscal/scenario.hpp"
#include "polyscal/wedge_geometry.hpp"

namespace polyscal {

// ---------------------------------------------------------------------------
// Wedge lemma battery
// ---------------------------------------------------------------------------

struct WedgeBattery {
  int samples = 0;
  int solved = 0;
  double max_roundtrip = 0.0;    // contact-angle reconstruction error
  double max_corner_diff = 0.0;  // closed form vs brute-force line angle
  bool window_iff_ok = true;     // solvable exactly on the open angle window
  bool monotone_ok = true;       // corner angle monotone in the opening
  double seconds = 0.0;
  bool pass = false;
};

inline WedgeBattery run_wedge_battery(int samples = 100000, unsigned seed = 20240817) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(0.02, kPi - 0.02);
  WedgeBattery out;
  out.samples = samples;
  for (int i = 0; i < samples; ++i) {
    const double g1 = U(rng), g2 = U(rng), th = U(rng);
    const AngleWindow win = angle_window(g1, g2);
    if (std::abs(th - win.lo) < 1e-9 || std::abs(th - win.hi) < 1e-9) continue;
    const Wedge w = Wedge::canonical(th);
    bool solved = true;
    Vec3 nu = Vec3::Zero();
    try {
      nu = plane_from_contact_angles(w, g1, g2);
    } catch (const Error&) {
      solved = false;
    }
    if (solved != win.contains(th)) out.window_iff_ok = false;
    if (!solved) continue;
    ++out.solved;
    const auto meas = measure_contact_angles(w, nu);
    out.max_roundtrip =
        std::max({out.max_roundtrip, std::abs(meas[0] - g1), std::abs(meas[1] - g2)});

    // brute force: intersect the plane with the faces, measure the line angle
    Vec3 l1 = nu.cross(w.nu1), l2 = nu.cross(w.nu2);
    if (l1.dot(w.bisector()) < 0) l1 = -l1;
    if (l2.dot(w.bisector()) < 0) l2 = -l2;
    const double brute = angle_between(l1, l2);
    out.max_corner_diff =
        std::max(out.max_corner_diff, std::abs(corner_angle(g1, g2, th) - brute));

    // monotonicity against a second admissible opening
    const double th2 = win.lo + (win.hi - win.lo) *
                                    std::uniform_real_distribution<double>(0.001, 0.999)(rng);
    if (!corner_angle_monotonicity_check(g1, g2, th, th2)) out.monotone_ok = false;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.pass = out.window_iff_ok && out.monotone_ok && out.max_roundtrip < 1e-12 &&
             out.max_corner_diff < 1e-10;
  return out;
}

inline Json wedge_battery_to_json(const WedgeBattery& b) {
  Json j;
  j["samples"] = b.samples;
  j["solved"] = b.solved;
  j["max_roundtrip"] = b.max_roundtrip;
  j["max_corner_diff"] = b.max_corner_diff;
  j["window_iff_ok"] = b.window_iff_ok;
  j["monotone_ok"] = b.monotone_ok;
  j["seconds"] = b.seconds;
  j["pass"] = b.pass;
  return j;
}

// ---------------------------------------------------------------------------
// Gauss-Bonnet verification on a scenario
// ---------------------------------------------------------------------------

struct GaussBonnetVerify {
  double defect_h = 0.0, defect_h2 = 0.0;
  double fitted_h = 0.0, fitted_h2 = 0.0;
  bool pass = false;  // exactness of the angle-defect path at both resolutions
};

inline GaussBonnetVerify verify_gauss_bonnet(const Scenario& sc) {
  GaussBonnetVerify out;
  const auto r1 = gauss_bonnet_residual(
      geometry_report(sc.domain, build_slice_mesh(sc.domain, sc.init_t, sc.h), sc.metric));
  const auto r2 = gauss_bonnet_residual(geometry_report(
      sc.domain, build_slice_mesh(sc.domain, sc.init_t, sc.h / 2.0), sc.metric));
  out.defect_h = r1.defect_path;
  out.defect_h2 = r2.defect_path;
  out.fitted_h = r1.fitted_path;
  out.fitted_h2 = r2.fitted_path;
  out.pass = r1.defect_path < 1e-10 && r2.defect_path < 1e-10;
  return out;
}

inline Json gauss_bonnet_to_json(const GaussBonnetVerify& v) {
  Json j;
  j["defect_residual_h"] = v.defect_h;
  j["defect_residual_h_over_2"] = v.defect_h2;
  j["fitted_residual_h"] = v.fitted_h;
  j["fitted_residual_h_over_2"] = v.fitted_h2;
  j["pass"] = v.pass;
  return j;
}

// ---------------------------------------------------------------------------
// Evolution verification on a scenario slice
// ---------------------------------------------------------------------------

struct EvolutionVerify {
  EvolutionCheck interior;  // f = cos(pi x) style speed
  EvolutionCheck constant;  // f = 1
  bool pass = false;
};

inline EvolutionVerify verify_evolution(const Scenario& sc, double dt = 1e-3) {
  EvolutionVerify out;
  const TriSurface S = build_slice_mesh(sc.domain, sc.init_t, sc.h);
  const Vec3 o(sc.domain.base[0].x(), sc.domain.base[0].y(), 0.0);
  out.interior = evolution_lemma_check(
      sc.domain, sc.metric, S,
      [&](const Vec3& x) { return std::cos(kPi * (x.x() - o.x())); }, dt);
  out.constant =
      evolution_lemma_check(sc.domain, sc.metric, S, [](const Vec3&) { return 1.0; }, dt);
  auto ok = [](const EvolutionCheck& c) {
    const bool h_ok = (c.dH_scale < 1e-8) ? c.dH_abs < 1e-6 : c.dH_rel() < 0.03;
    const bool a_ok = (c.dAngle_scale < 1e-8) ? c.dAngle_abs < 1e-6 : c.dAngle_rel() < 0.03;
    return h_ok && a_ok;
  };
  out.pass = ok(out.interior) && ok(out.constant);
  return out;
}

inline Json evolution_check_to_json(const EvolutionCheck& c) {
  Json j;
  j["dH_abs"] = c.dH_abs;
  j["dH_scale"] = c.dH_scale;
  j["dAngle_abs"] = c.dAngle_abs;
  j["dAngle_scale"] = c.dAngle_scale;
  j["dN_abs"] = c.dN_abs;
  j["dN_scale"] = c.dN_scale;
  return j;
}

inline Json evolution_to_json(const EvolutionVerify& v) {
  Json j;
  j["interior_speed"] = evolution_check_to_json(v.interior);
  j["constant_speed"] = evolution_check_to_json(v.constant);
  j["pass"] = v.pass;
  return j;
}

}  // namespace polyscal
