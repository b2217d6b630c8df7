#include "gridflex/flexregion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "gridflex/feeder_opf.hpp"
#include "gridflex/nlp.hpp"
#include "gridflex/powerflow.hpp"

namespace gridflex {

namespace {

std::vector<std::string> binding_labels(const FeederOpf& fo, const NlpSolution& sol) {
  std::vector<std::string> out;
  for (int i : sol.active_set) out.push_back(fo.ineq_label(i));
  for (int i = 0; i < fo.n_ibg(); ++i) {
    const std::string bus = fo.feeder().ibgs[i].bus;
    if (sol.lower_mult.size() > fo.idx_pg(i) && sol.lower_mult[fo.idx_pg(i)] > 1e-7)
      out.push_back("Pmin@" + bus);
    if (sol.upper_mult.size() > fo.idx_pg(i) && sol.upper_mult[fo.idx_pg(i)] > 1e-7)
      out.push_back("Pmax@" + bus);
  }
  return out;
}

ScanPoint scan_one(const FeederOpf& base, double theta_deg, ScanSense sense) {
  const double th = theta_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  FeederOpf fo = base.with_ray(c, s);
  NlpProblem prob = fo.constraints();
  const double sign = sense == ScanSense::Max ? 1.0 : -1.0;
  const int idp = fo.idx_dp(), idq = fo.idx_dq();
  prob.objective = [=](const Eigen::VectorXd& x) {
    return -sign * (c * x[idp] + s * x[idq]);
  };
  prob.gradient = [=, n = prob.n](const Eigen::VectorXd&) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    g[idp] = -sign * c;
    g[idq] = -sign * s;
    return g;
  };
  NlpSolution sol = solve_nlp(prob, fo.start());
  if (!sol.ok())
    throw FlexRegionError("boundary solve failed at theta=" + std::to_string(theta_deg) +
                          (sense == ScanSense::Max ? " (max): " : " (min): ") +
                          sol.diagnostic);
  ScanPoint pt;
  pt.theta_deg = theta_deg;
  pt.sense = sense;
  const auto& net = fo.feeder();
  pt.dp_mw = net.pu_to_mw(sol.x[idp]);
  pt.dq_mvar = net.pu_to_mw(sol.x[idq]);
  pt.binding = binding_labels(fo, sol);
  return pt;
}

}  // namespace

ScanPoint fr_boundary_point(const NetworkCase& feeder, double theta_deg,
                            ScanSense sense) {
  FeederOpf fo(feeder);
  return scan_one(fo, theta_deg, sense);
}

std::vector<ScanPoint> radial_scan(const NetworkCase& feeder, const ScanOptions& opts) {
  const double dth = opts.dtheta_deg;
  if (dth <= 0.0 || std::abs(std::round(180.0 / dth) - 180.0 / dth) > 1e-9)
    throw FlexRegionError("scan step must divide 180 degrees");
  const int ndir = static_cast<int>(std::round(180.0 / dth)) + 1;

  FeederOpf base(feeder);
  struct Task {
    double theta;
    ScanSense sense;
  };
  std::vector<Task> tasks;
  for (int i = 0; i < ndir; ++i) {
    tasks.push_back({i * dth, ScanSense::Max});
    tasks.push_back({i * dth, ScanSense::Min});
  }
  std::vector<std::optional<ScanPoint>> results(tasks.size());

  const int nthreads = std::max(1, opts.threads);
  auto worker = [&](int t0) {
    for (size_t i = t0; i < tasks.size(); i += nthreads) {
      try {
        results[i] = scan_one(base, tasks[i].theta, tasks[i].sense);
      } catch (const std::exception&) {
        results[i] = std::nullopt;
      }
    }
  };
  if (nthreads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  std::vector<ScanPoint> pts;
  int failures = 0;
  for (auto& r : results) {
    if (!r) {
      ++failures;
      continue;
    }
    bool dup = false;
    for (const auto& p : pts)
      if (std::abs(p.dp_mw - r->dp_mw) < 1e-6 && std::abs(p.dq_mvar - r->dq_mvar) < 1e-6)
        dup = true;
    if (!dup) pts.push_back(std::move(*r));
  }
  if (failures > opts.max_failure_ratio * static_cast<double>(tasks.size()))
    throw FlexRegionError("radial scan failure rate above " +
                          std::to_string(opts.max_failure_ratio));
  if (pts.size() < 3)
    throw FlexRegionError("fewer than 3 distinct boundary points recovered");
  return pts;
}

std::pair<double, double> feeder_anchor_mw(const NetworkCase& feeder) {
  PfResult base = solve_powerflow(feeder, std::nullopt);
  return {base.boundary_p_mw, base.boundary_q_mvar};
}

FlexPolygon polygon_from_scan(const NetworkCase& feeder,
                              const std::vector<ScanPoint>& points,
                              int target_vertices) {
  std::vector<Eigen::Vector2d> cloud;
  cloud.reserve(points.size());
  for (const auto& p : points) cloud.push_back({p.dp_mw, p.dq_mvar});
  auto [p0, q0] = feeder_anchor_mw(feeder);
  return reduce_polygon(cloud, target_vertices, {p0, q0});
}

FlexPolygon polygon_from_corners(const NetworkCase& feeder,
                                 const std::vector<CornerPoint>& corners) {
  std::vector<Eigen::Vector2d> cloud;
  for (const auto& c : corners)
    if (c.feasible && !c.coincident) cloud.push_back({c.dp_mw, c.dq_mvar});
  if (cloud.size() < 3)
    throw FlexRegionError("fewer than 3 feasible corner points");
  auto [p0, q0] = feeder_anchor_mw(feeder);
  return FlexPolygon::from_point_cloud(cloud, {p0, q0});
}

// ---------------------------------------------------------------------------
// corner-point enumeration on the 2-bus feeder

namespace {

struct TwoBus {
  int pcc, d, g;
  double g_dg, b_dg;      // Ybus entries seen from bus g
  double g_gg, b_gg;
  double p_g0;            // fixed IBG output, pu
  double i_n;             // converter current limit, pu
  double vmin_d, vmax_d, vmin_g, vmax_g;
};

TwoBus detect_two_bus(const NetworkCase& feeder) {
  if (feeder.n_buses() != 3)
    throw FlexRegionError("feeder is not the 2-bus topology (expected 3 buses)");
  TwoBus tb{};
  tb.pcc = feeder.slack_bus();
  const TransformerLtc* ltc = nullptr;
  for (const auto& t : feeder.transformers)
    if (feeder.bus_index(t.hv_bus) == tb.pcc) ltc = &t;
  if (!ltc) throw FlexRegionError("feeder lacks an LTC at the PCC");
  tb.d = feeder.bus_index(ltc->mv_bus);
  tb.g = 3 - tb.pcc - tb.d;
  if (feeder.ibgs.size() != 1 || feeder.bus_index(feeder.ibgs[0].bus) != tb.g)
    throw FlexRegionError("feeder is not the 2-bus topology (need one IBG on the far bus)");
  const auto& u = feeder.ibgs[0];
  if (u.p_min_mw != u.p_max_mw)
    throw FlexRegionError("corner enumeration expects constant IBG active power");
  for (const auto& l : feeder.loads)
    if (feeder.bus_index(l.bus) != tb.d)
      throw FlexRegionError("feeder is not the 2-bus topology (loads must sit on the LTC bus)");
  auto [G, B] = feeder_ybus(feeder);
  tb.g_gg = G(tb.g, tb.g);
  tb.b_gg = B(tb.g, tb.g);
  tb.g_dg = G(tb.g, tb.d);
  tb.b_dg = B(tb.g, tb.d);
  tb.p_g0 = feeder.mw_to_pu(u.p0_mw);
  tb.i_n = u.i_n_pu;
  tb.vmin_d = feeder.buses[tb.d].v_min;
  tb.vmax_d = feeder.buses[tb.d].v_max;
  tb.vmin_g = feeder.buses[tb.g].v_min;
  tb.vmax_g = feeder.buses[tb.g].v_max;
  return tb;
}

// Square system in u = (e_g, f_g, v_d, q_g); two rows are the power balance
// at the IBG bus, two rows the corner conditions.
struct CornerSpec {
  char label;
  std::array<std::string, 2> binding;
  // condition kinds: 0 = v_d fixed, 1 = V_g fixed, 2 = q_g = sign*q_a(V_g)
  struct Cond {
    int kind;
    double value;  // limit (voltage) or sign (+1/-1) for the reactive branch
  };
  std::array<Cond, 2> conds;
};

bool solve_corner(const TwoBus& tb, const CornerSpec& spec, Eigen::Vector4d& u) {
  auto eval = [&](const Eigen::Vector4d& x, Eigen::Vector4d& F, Eigen::Matrix4d& J) {
    const double eg = x[0], fg = x[1], vd = x[2], qg = x[3];
    const double a = tb.g_gg * eg - tb.b_gg * fg + tb.g_dg * vd;
    const double b = tb.g_gg * fg + tb.b_gg * eg + tb.b_dg * vd;
    const double pnet = eg * a + fg * b;
    const double qnet = fg * a - eg * b;
    F[0] = tb.p_g0 - pnet;
    F[1] = qg - qnet;
    J.setZero();
    J(0, 0) = -(a + eg * tb.g_gg + fg * tb.b_gg);
    J(0, 1) = -(b - eg * tb.b_gg + fg * tb.g_gg);
    J(0, 2) = -(eg * tb.g_dg + fg * tb.b_dg);
    J(1, 0) = -(fg * tb.g_gg - b - eg * tb.b_gg);
    J(1, 1) = -(a - fg * tb.b_gg - eg * tb.g_gg);
    J(1, 2) = -(fg * tb.g_dg - eg * tb.b_dg);
    J(1, 3) = 1.0;
    for (int c = 0; c < 2; ++c) {
      const auto& cond = spec.conds[c];
      const int r = 2 + c;
      const double vg2 = eg * eg + fg * fg;
      const double vg = std::sqrt(vg2);
      switch (cond.kind) {
        case 0:
          F[r] = vd - cond.value;
          J(r, 2) = 1.0;
          break;
        case 1:
          F[r] = vg2 - cond.value * cond.value;
          J(r, 0) = 2.0 * eg;
          J(r, 1) = 2.0 * fg;
          break;
        case 2: {
          const double head = std::max(vg2 * tb.i_n * tb.i_n - tb.p_g0 * tb.p_g0, 1e-12);
          const double qa = std::sqrt(head);
          F[r] = qg - cond.value * qa;
          const double dqa_dvg = vg * tb.i_n * tb.i_n / qa;
          J(r, 0) = -cond.value * dqa_dvg * eg / vg;
          J(r, 1) = -cond.value * dqa_dvg * fg / vg;
          J(r, 3) = 1.0;
          break;
        }
      }
    }
  };
  Eigen::Vector4d F;
  Eigen::Matrix4d J;
  eval(u, F, J);
  double fn = F.cwiseAbs().maxCoeff();
  for (int it = 0; it < 60; ++it) {
    if (fn < 1e-11) return true;
    Eigen::Vector4d du = J.colPivHouseholderQr().solve(-F);
    if (!du.allFinite()) return false;
    double alpha = 1.0;
    Eigen::Vector4d ut = u;
    Eigen::Vector4d Ft = F;
    Eigen::Matrix4d Jt = J;
    for (int h = 0; h <= 8; ++h) {
      ut = u + alpha * du;
      eval(ut, Ft, Jt);
      if (Ft.cwiseAbs().maxCoeff() < fn || h == 8) break;
      alpha *= 0.5;
    }
    u = ut;
    F = Ft;
    J = Jt;
    fn = F.cwiseAbs().maxCoeff();
  }
  return fn < 1e-9;
}

}  // namespace

std::vector<CornerPoint> corner_points_2bus(const NetworkCase& feeder) {
  const TwoBus tb = detect_two_bus(feeder);
  PfResult base = solve_powerflow(feeder, std::nullopt);
  auto [pj0, qj0] = feeder_anchor_mw(feeder);

  const std::vector<CornerSpec> specs = {
      {'A', {"Vd_max", "Vg_max"}, {{{0, tb.vmax_d}, {1, tb.vmax_g}}}},
      {'B', {"Vd_max", "-Qg_max"}, {{{0, tb.vmax_d}, {2, -1.0}}}},
      {'C', {"Vg_min", "-Qg_max"}, {{{1, tb.vmin_g}, {2, -1.0}}}},
      {'D', {"Vd_min", "Vg_min"}, {{{0, tb.vmin_d}, {1, tb.vmin_g}}}},
      {'E', {"Vd_min", "Qg_max"}, {{{0, tb.vmin_d}, {2, +1.0}}}},
      {'F', {"Vg_max", "Qg_max"}, {{{1, tb.vmax_g}, {2, +1.0}}}},
  };

  std::vector<CornerPoint> out;
  const double tol = 1e-7;
  for (const auto& spec : specs) {
    CornerPoint cp;
    cp.label = spec.label;
    cp.binding = spec.binding;
    Eigen::Vector4d u(base.point.e[tb.g], base.point.f[tb.g], base.point.v_mag(tb.d),
                      feeder.mw_to_pu(feeder.ibgs[0].q0_mvar));
    // seed the fixed quantities at their limits
    for (const auto& cond : spec.conds) {
      if (cond.kind == 0) u[2] = cond.value;
      if (cond.kind == 1) {
        const double vg = std::max(base.point.v_mag(tb.g), 1e-6);
        u[0] *= cond.value / vg;
        u[1] *= cond.value / vg;
      }
    }
    if (solve_corner(tb, spec, u)) {
      const double vg = std::hypot(u[0], u[1]);
      const double vd = u[2];
      const double qa = std::sqrt(
          std::max(vg * vg * tb.i_n * tb.i_n - tb.p_g0 * tb.p_g0, 0.0));
      bool ok = vd >= tb.vmin_d - tol && vd <= tb.vmax_d + tol &&
                vg >= tb.vmin_g - tol && vg <= tb.vmax_g + tol &&
                std::abs(u[3]) <= qa + tol;
      if (ok) {
        OperatingPoint pt;
        pt.e = Eigen::VectorXd::Ones(3);
        pt.f = Eigen::VectorXd::Zero(3);
        pt.e[tb.d] = vd;
        pt.e[tb.g] = u[0];
        pt.f[tb.g] = u[1];
        auto bf = boundary_from_state(feeder, pt);
        cp.dp_mw = feeder.pu_to_mw(bf.p_j) - pj0;
        cp.dq_mvar = feeder.pu_to_mw(bf.q_j) - qj0;
        cp.feasible = true;
      }
    }
    out.push_back(cp);
  }
  // mark duplicates among the feasible corners
  for (size_t i = 0; i < out.size(); ++i) {
    if (!out[i].feasible) continue;
    for (size_t j = 0; j < i; ++j) {
      if (!out[j].feasible || out[j].coincident) continue;
      if (std::abs(out[i].dp_mw - out[j].dp_mw) < 1e-6 &&
          std::abs(out[i].dq_mvar - out[j].dq_mvar) < 1e-6)
        out[i].coincident = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// export formats

std::string polygon_to_json(const FlexPolygon& poly, const PolygonExportMeta& meta) {
  nlohmann::ordered_json doc;
  doc["method"] = meta.method;
  if (meta.method == "scan") doc["dtheta_deg"] = meta.dtheta_deg;
  if (!meta.case_name.empty()) doc["case"] = meta.case_name;
  if (!meta.timestamp.empty()) doc["generated_at"] = meta.timestamp;
  doc["anchor_MW"] = {poly.anchor().x(), poly.anchor().y()};
  auto& vs = doc["vertices"] = nlohmann::ordered_json::array();
  for (const auto& v : poly.vertices()) vs.push_back({v.x(), v.y()});
  auto& hs = doc["half_planes"] = nlohmann::ordered_json::array();
  for (const auto& h : poly.half_planes())
    hs.push_back({{"alpha", h.alpha}, {"beta", h.beta}});
  return doc.dump(2) + "\n";
}

std::string polygon_to_csv(const FlexPolygon& poly) {
  std::string out = "dP_MW,dQ_Mvar\n";
  for (const auto& v : poly.vertices()) {
    out += std::to_string(v.x());
    out += ',';
    out += std::to_string(v.y());
    out += '\n';
  }
  return out;
}

FlexPolygon polygon_from_json(const std::string& text) {
  auto doc = nlohmann::json::parse(text);
  std::vector<Eigen::Vector2d> ring;
  for (const auto& v : doc.at("vertices"))
    ring.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  Eigen::Vector2d anchor{0.0, 0.0};
  if (doc.contains("anchor_MW"))
    anchor = {doc["anchor_MW"][0].get<double>(), doc["anchor_MW"][1].get<double>()};
  return FlexPolygon::from_vertices(std::move(ring), anchor);
}

}  // namespace gridflex
