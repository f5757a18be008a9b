#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "polyscal/capillary_solver.hpp"
#include "polyscal/foliation.hpp"
#include "polyscal/stability.hpp"
#include "polyscal/wedge_geometry.hpp"

namespace polyscal {

using Json = nlohmann::json;

namespace detail {
inline const Json& require_field(const Json& j, const char* key, const char* ctx) {
  if (!j.contains(key))
    fail(ErrorCode::BadConfig, std::string(ctx) + ": missing field '" + key + "'");
  return j.at(key);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

inline PolyhedralDomain domain_from_json(const Json& j) {
  const std::string kind = detail::require_field(j, "kind", "domain").get<std::string>();
  const Json& jb = detail::require_field(j, "base", "domain");
  std::vector<Vec2> base;
  for (const auto& p : jb) base.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  if (kind == "cone") {
    const Json& ja = detail::require_field(j, "apex", "domain");
    return make_cone(base, Vec3(ja.at(0), ja.at(1), ja.at(2)));
  }
  if (kind == "prism") {
    const double s = detail::require_field(j, "top_scale", "domain").get<double>();
    const Json& jt = detail::require_field(j, "top_offset", "domain");
    return make_prism(base, s, Vec3(jt.at(0), jt.at(1), jt.at(2)));
  }
  fail(ErrorCode::BadConfig, "domain: kind must be 'cone' or 'prism'");
}

inline MetricField metric_from_json(const Json& j, const PolyhedralDomain& P) {
  const std::string name = detail::require_field(j, "name", "metric").get<std::string>();
  Box3 box = P.bounding_box(1.0);
  if (j.contains("box")) {
    const Json& jb = j.at("box");
    box.lo = Vec3(jb.at("lo").at(0), jb.at("lo").at(1), jb.at("lo").at(2));
    box.hi = Vec3(jb.at("hi").at(0), jb.at("hi").at(1), jb.at("hi").at(2));
  }
  MetricField f;
  if (name == "flat") {
    f = make_flat(box);
  } else if (name == "conformal_gaussian") {
    const double eps = detail::require_field(j, "eps", "metric").get<double>();
    const double sigma = detail::require_field(j, "sigma", "metric").get<double>();
    Vec3 center = Vec3::Zero();
    if (j.contains("center")) {
      const Json& jc = j.at("center");
      center = Vec3(jc.at(0), jc.at(1), jc.at(2));
    }
    f = make_conformal_gaussian(eps, sigma, box, center);
  } else if (name == "diag_perturb") {
    const double eps = detail::require_field(j, "eps", "metric").get<double>();
    f = make_diag_perturb(eps, box);
  } else {
    fail(ErrorCode::BadConfig, "metric: unknown catalog name '" + name + "'");
  }
  if (j.contains("h_fd")) f.h_fd = j.at("h_fd").get<double>();
  return f;
}

inline std::vector<double> gamma_from_json(const Json& j, const PolyhedralDomain& P) {
  if (j.is_string() && j.get<std::string>() == "model") return model_angles(P).gamma;
  if (j.is_array()) {
    std::vector<double> g;
    for (const auto& v : j) g.push_back(v.get<double>());
    return resolve_gamma(P, g);
  }
  fail(ErrorCode::BadConfig, "gamma: expected \"model\" or a list of angles");
}

struct Scenario {
  std::string name = "scenario";
  PolyhedralDomain domain;
  MetricField metric;
  std::vector<double> gamma;
  std::string task = "solve";  // solve | foliate | verify_* | curvature
  double h = 1.0 / 8.0;
  double init_t = 0.5;
  double perturb_amp = 0.0;
  unsigned seed = 1;
  SolverOptions solver;
  double rho_from = 0.8, rho_to = 0.2;
  int steps = 10;
  std::string baseline;  // optional path to a regression baseline
  Json raw;
};

inline Scenario scenario_from_json(const Json& j) {
  Scenario sc;
  sc.raw = j;
  if (j.contains("name")) sc.name = j.at("name").get<std::string>();
  sc.domain = domain_from_json(detail::require_field(j, "domain", "scenario"));
  sc.metric = metric_from_json(detail::require_field(j, "metric", "scenario"), sc.domain);
  sc.gamma = j.contains("gamma") ? gamma_from_json(j.at("gamma"), sc.domain)
                                 : model_angles(sc.domain).gamma;
  if (j.contains("task")) sc.task = j.at("task").get<std::string>();
  if (j.contains("mesh")) {
    const Json& jm = j.at("mesh");
    if (jm.contains("h")) sc.h = jm.at("h").get<double>();
    if (!(sc.h > 0)) fail(ErrorCode::BadConfig, "mesh: h must be positive");
  }
  if (j.contains("solver")) {
    const Json& js = j.at("solver");
    if (js.contains("tol")) sc.solver.tol_rel = js.at("tol").get<double>();
    if (js.contains("max_iter")) sc.solver.max_iterations = js.at("max_iter").get<int>();
    if (js.contains("step0")) sc.solver.step0_rel = js.at("step0").get<double>();
    if (js.contains("init_t")) sc.init_t = js.at("init_t").get<double>();
    if (js.contains("perturb_amp")) sc.perturb_amp = js.at("perturb_amp").get<double>();
    if (js.contains("seed")) sc.seed = js.at("seed").get<unsigned>();
  }
  sc.solver.gamma = sc.gamma;
  if (j.contains("foliation")) {
    const Json& jf = j.at("foliation");
    if (jf.contains("rho_from")) sc.rho_from = jf.at("rho_from").get<double>();
    if (jf.contains("rho_to")) sc.rho_to = jf.at("rho_to").get<double>();
    if (jf.contains("steps")) sc.steps = jf.at("steps").get<int>();
  }
  if (j.contains("baseline")) sc.baseline = j.at("baseline").get<std::string>();
  return sc;
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::BadConfig, "cannot open '" + path + "'");
  Json j;
  in >> j;
  return j;
}

// ---------------------------------------------------------------------------
// Mesh and report persistence
// ---------------------------------------------------------------------------

inline void write_obj(const std::string& path, const TriSurface& S) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::BadConfig, "cannot write '" + path + "'");
  out.precision(17);
  for (const auto& v : S.V) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& f : S.F)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

inline Json tags_to_json(const TriSurface& S) {
  Json j;
  Json tags = Json::array();
  for (const auto& t : S.tags) {
    Json e;
    switch (t.kind) {
      case VertexTag::Kind::Interior:
        e["type"] = "interior";
        break;
      case VertexTag::Kind::OnFace:
        e["type"] = "face";
        e["index"] = t.index;
        break;
      case VertexTag::Kind::OnEdge:
        e["type"] = "edge";
        e["index"] = t.index;
        break;
    }
    tags.push_back(e);
  }
  j["tags"] = tags;
  j["corners"] = S.corners;
  return j;
}

inline void write_mesh(const std::string& obj_path, const TriSurface& S) {
  write_obj(obj_path, S);
  std::ofstream side(obj_path + ".json");
  side << tags_to_json(S).dump(2) << "\n";
}

inline TriSurface read_mesh(const std::string& obj_path) {
  std::ifstream in(obj_path);
  if (!in) fail(ErrorCode::BadConfig, "cannot open '" + obj_path + "'");
  TriSurface S;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string head;
    ss >> head;
    if (head == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      S.V.push_back(v);
    } else if (head == "f") {
      std::array<int, 3> f{};
      for (int c = 0; c < 3; ++c) {
        std::string tok;
        ss >> tok;
        f[c] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      S.F.push_back(f);
    }
  }
  const Json side = load_json(obj_path + ".json");
  for (const auto& e : side.at("tags")) {
    VertexTag t;
    const std::string type = e.at("type").get<std::string>();
    if (type == "face") t = {VertexTag::Kind::OnFace, e.at("index").get<int>()};
    else if (type == "edge") t = {VertexTag::Kind::OnEdge, e.at("index").get<int>()};
    S.tags.push_back(t);
  }
  for (const auto& c : side.at("corners")) S.corners.push_back(c.get<int>());
  if (S.tags.size() != S.V.size())
    fail(ErrorCode::BadConfig, "sidecar tag list does not match the OBJ vertex count");
  return S;
}

inline Json energy_report_to_json(const EnergyReport& rep) {
  Json j;
  j["energy"] = rep.energy;
  j["area"] = rep.area;
  j["wetted"] = rep.wetted;
  j["gamma"] = rep.gamma;
  j["h_inf"] = rep.h_inf;
  j["max_angle_residual"] = rep.max_angle_residual;
  j["face_angle_residual"] = rep.face_angle_residual;
  j["clearance_base"] = rep.clearance_base;
  j["clearance_far"] = rep.clearance_far;
  j["grad_inf"] = rep.grad_inf;
  j["iterations"] = rep.iterations;
  j["converged"] = rep.converged;
  return j;
}

inline Json comparison_to_json(const ComparisonLedger& led) {
  Json j;
  j["hypotheses_ok"] = led.hypotheses_ok;
  j["failed_hypothesis"] = led.failed_hypothesis;
  j["min_scalar"] = led.min_scalar;
  j["min_face_mean"] = led.min_face_mean;
  j["base_min_mean"] = led.base_min_mean;
  j["min_edge_margin"] = led.min_edge_margin;
  j["q_constant"] = led.q_constant;
  j["int_gauss"] = led.int_gauss;
  j["int_kg"] = led.int_kg;
  j["corner_deficit"] = led.corner_deficit;
  j["l_interior"] = led.l_interior;
  j["l_boundary"] = led.l_boundary;
  j["l_total"] = led.l_total;
  j["tol"] = led.tol;
  j["verdict"] = led.verdict;
  if (led.hypotheses_ok) j["solve"] = energy_report_to_json(led.solve_report);
  return j;
}

// CSV trace: rho, lambda, C, min_lapse, angle_residual, Hprime_minus_CH.
// The derivative column is taken in the direction the leaves advance along
// their normal (toward the vertex for cones) by central differences.
inline std::string trace_to_csv(const FoliationTrace& tr) {
  std::ostringstream out;
  out.precision(17);
  out << "rho,lambda,C,min_lapse,angle_residual,Hprime_minus_CH\n";
  const double orient = tr.cone ? -1.0 : 1.0;
  for (size_t i = 0; i < tr.leaves.size(); ++i) {
    const LeafState& leaf = tr.leaves[i];
    out << leaf.rho << "," << leaf.lambda << "," << leaf.C << ",";
    if (std::isfinite(leaf.min_lapse)) out << leaf.min_lapse;
    out << "," << leaf.angle_residual << ",";
    if (i > 0 && i + 1 < tr.leaves.size()) {
      const auto &a = tr.leaves[i - 1], &c = tr.leaves[i + 1];
      const double dH = orient * (c.lambda - a.lambda) / (c.rho - a.rho);
      out << dH - leaf.C * leaf.lambda;
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Scenario runner
// ---------------------------------------------------------------------------

struct RunResult {
  Json report;
  int exit_code = 0;  // 0 pass, 1 verdict fail, 2 hypothesis fail, 3 numerical error
};

inline TriSurface build_solve_init(const Scenario& sc) {
  TriSurface init = build_slice_mesh(sc.domain, sc.init_t, sc.h);
  if (sc.perturb_amp != 0.0) {
    // deterministic smooth perturbation in the sliding directions
    const double zs = sc.domain.top_height();
    for (int v = 0; v < init.nv(); ++v) {
      const Vec3& x = init.V[v];
      const double b = std::sin(kPi * (x.x() - sc.domain.base[0].x())) *
                       std::sin(kPi * (x.y() - sc.domain.base[0].y()));
      if (sc.domain.kind == PolyhedralDomain::Kind::Prism)
        init.V[v].z() += sc.perturb_amp * zs * b;
      else if (init.tags[v].kind == VertexTag::Kind::Interior)
        init.V[v] += sc.perturb_amp * b * (sc.domain.apex - x);
    }
  }
  return init;
}

inline RunResult run_scenario(const Scenario& sc, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  auto opath = [&](const std::string& suffix) {
    return (fs::path(out_dir.empty() ? "." : out_dir) / (sc.name + suffix)).string();
  };

  RunResult res;
  Json& rep = res.report;
  rep["name"] = sc.name;
  rep["task"] = sc.task;

  try {
    if (sc.task == "solve") {
      const TriSurface init = build_solve_init(sc);
      const MinimizeResult sol = minimize(sc.domain, sc.metric, init, sc.solver);
      rep["report"] = energy_report_to_json(sol.report);
      write_mesh(opath(".obj"), sol.surface);
      res.exit_code = sol.report.converged ? 0 : 1;
    } else if (sc.task == "foliate") {
      FoliateOptions fopts;
      fopts.steps = sc.steps;
      fopts.h = sc.h;
      fopts.leaf.gamma = sc.gamma;
      const FoliationTrace tr = foliate(sc.domain, sc.metric, sc.rho_from, sc.rho_to, fopts);
      std::ofstream csv(opath(".csv"));
      csv << trace_to_csv(tr);
      Json jt;
      jt["leaves"] = tr.leaves.size();
      jt["truncated"] = tr.truncated;
      if (!tr.leaves.empty()) {
        jt["lambda_first"] = tr.leaves.front().lambda;
        jt["lambda_last"] = tr.leaves.back().lambda;
        jt["energy_first"] = tr.leaves.front().energy;
        jt["energy_last"] = tr.leaves.back().energy;
      }
      if (tr.leaves.size() >= 3) {
        const DynamicsReport dyn = dynamics_check(tr, sc.domain, sc.metric);
        jt["dynamics_min_residual"] = dyn.min_residual;
        jt["dynamics_tol"] = dyn.tol;
        jt["dynamics_pass"] = dyn.pass;
        res.exit_code = (dyn.pass && !tr.truncated) ? 0 : 1;
      } else {
        res.exit_code = tr.truncated ? 1 : 0;
      }
      rep["report"] = jt;
    } else if (sc.task == "verify_comparison") {
      ComparisonOptions copts;
      copts.h = sc.h;
      copts.init_t = sc.init_t;
      copts.solver = sc.solver;
      const ComparisonLedger led = comparison_verdict(sc.domain, sc.metric, copts);
      rep["report"] = comparison_to_json(led);
      if (!led.hypotheses_ok) res.exit_code = 2;
      else if (led.verdict != "consistent") res.exit_code = 1;
    } else if (sc.task == "curvature") {
      std::vector<Vec3> pts;
      for (int it = 1; it <= 6; ++it) {
        const auto poly = slice_polygon(sc.domain, it / 7.0);
        Vec3 c = Vec3::Zero();
        for (const auto& p : poly) c += p;
        c /= static_cast<double>(poly.size());
        pts.push_back(c);
        for (const auto& p : poly) pts.push_back(c + 0.7 * (p - c));
      }
      const ScalarSignReport sign = verify_scalar_sign(sc.metric, pts);
      Json js;
      js["min_scalar"] = sign.min_scalar;
      js["argmin"] = {sign.argmin.x(), sign.argmin.y(), sign.argmin.z()};
      js["pass"] = sign.pass;
      js["samples"] = sign.samples;
      rep["report"] = js;
      res.exit_code = sign.pass ? 0 : 1;
    } else {
      fail(ErrorCode::BadConfig, "unknown task '" + sc.task + "'");
    }
  } catch (const Error& e) {
    rep["error"] = e.what();
    res.exit_code = (e.code() == ErrorCode::HypothesisFailed) ? 2 : 3;
  }

  std::ofstream out(opath(".report.json"));
  out << rep.dump(2) << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// Regression against stored baselines
// ---------------------------------------------------------------------------

struct RegressResult {
  bool pass = true;
  Json diffs;
};

// Baseline schema: {"fields": {"/json/pointer": {"value": v, "rtol": r, "atol": a}}}
inline RegressResult regress(const Json& bundle, const Json& baseline) {
  if (!baseline.contains("fields"))
    fail(ErrorCode::MissingBaseline, "baseline has no 'fields' table");
  RegressResult out;
  out.diffs = Json::object();
  for (const auto& [ptr, spec] : baseline.at("fields").items()) {
    Json entry;
    const Json::json_pointer jp(ptr);
    if (!bundle.contains(jp)) {
      entry["status"] = "missing";
      out.pass = false;
      out.diffs[ptr] = entry;
      continue;
    }
    const double actual = bundle.at(jp).get<double>();
    const double value = spec.at("value").get<double>();
    const double rtol = spec.value("rtol", 0.0);
    const double atol = spec.value("atol", 0.0);
    const double diff = std::abs(actual - value);
    const bool ok = diff <= atol + rtol * std::abs(value);
    entry["actual"] = actual;
    entry["expected"] = value;
    entry["diff"] = diff;
    entry["pass"] = ok;
    out.pass = out.pass && ok;
    out.diffs[ptr] = entry;
  }
  return out;
}

inline RegressResult regress_files(const Json& bundle, const std::string& baseline_path) {
  if (!std::filesystem::exists(baseline_path))
    fail(ErrorCode::MissingBaseline, "baseline '" + baseline_path + "' not found");
  return regress(bundle, load_json(baseline_path));
}

}  // namespace polyscal
