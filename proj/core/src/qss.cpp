#include "gridflex/qss.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "gridflex/powerflow.hpp"

namespace gridflex {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LtcRef {
  const TransformerLtc* ltc = nullptr;
  int index = -1;  // position in net.transformers
  int root = -1;
};

LtcRef find_root_ltc(const NetworkCase& net) {
  LtcRef ref;
  const int pcc = net.slack_bus();
  for (size_t i = 0; i < net.transformers.size(); ++i) {
    if (net.bus_index(net.transformers[i].hv_bus) == pcc) {
      ref.ltc = &net.transformers[i];
      ref.index = static_cast<int>(i);
      ref.root = net.bus_index(net.transformers[i].mv_bus);
      return ref;
    }
  }
  throw PfError("feeder case lacks an LTC at the PCC");
}

struct ClipSolve {
  bool ok = false;
  OperatingPoint point;
  Eigen::VectorXd ibg_q_pu;
  PfModel::BoundaryFlows flows;
};

// One quasi-steady-state equilibrium: IBGs at their voltage setpoints with
// converter current clipping, discrete tap in the admittance matrix.
ClipSolve solve_tick(const NetworkCase& net, const LtcRef& ltc, double tap_ratio,
                     const std::vector<double>& vset,
                     const OperatingPoint* warm) {
  const int ni = static_cast<int>(net.ibgs.size());
  std::vector<double> qfix(ni, kNaN);
  ClipSolve out;
  for (int pass = 0; pass <= 2 * ni + 1; ++pass) {
    PfModel::Options mo;
    mo.mode = PfModel::Mode::FeederExplicit;
    mo.tap.assign(net.transformers.size(), 1.0);
    mo.tap[ltc.index] = tap_ratio;
    mo.ibg_vset = vset;
    mo.ibg_qfix_mvar = qfix;
    for (int i = 0; i < ni; ++i)
      if (std::isnan(qfix[i])) mo.ibg_pv.push_back(i);
    PfModel model(net, mo);
    OperatingPoint pt = warm ? *warm : model.start_point();
    pt.lambda = 0.0;
    auto st = model.solve(pt);
    if (!st.converged) return out;
    Eigen::VectorXd q = model.recover_ibg_q(pt);
    int clipped = -1;
    for (int i = 0; i < ni; ++i) {
      if (!std::isnan(qfix[i])) continue;
      const auto& u = net.ibgs[i];
      const int k = net.bus_index(u.bus);
      const double v = pt.v_mag(k);
      const double p = net.mw_to_pu(u.p0_mw);
      const double head = v * v * u.i_n_pu * u.i_n_pu - p * p;
      const double qmax = std::sqrt(std::max(head, 0.0));
      if (std::abs(q[i]) > qmax + 1e-9) {
        qfix[i] = net.pu_to_mw(q[i] > 0 ? qmax : -qmax);
        clipped = i;
        break;
      }
    }
    if (clipped < 0) {
      out.ok = true;
      out.point = pt;
      out.ibg_q_pu = q;
      out.flows = model.boundary_flows(pt);
      return out;
    }
  }
  return out;
}

int tap_steps(const TransformerLtc& ltc) {
  return static_cast<int>(std::round((ltc.tap_max - ltc.tap_min) / ltc.tap_step));
}

double tap_ratio_at(const TransformerLtc& ltc, int idx) {
  // idx counts steps away from the nominal ratio 1.0
  return 1.0 + idx * ltc.tap_step;
}

}  // namespace

ControlSchedule parse_schedule(const std::string& json_text) {
  auto doc = nlohmann::json::parse(json_text);
  ControlSchedule s;
  if (doc.contains("ltc") && !doc["ltc"].is_null()) {
    LtcCommand c;
    c.v_set = doc["ltc"].value("v_set", 1.0);
    c.deadband_half = doc["ltc"].value("deadband_half", 0.01);
    s.ltc = c;
  }
  if (doc.contains("ramps")) {
    for (const auto& jr : doc["ramps"]) {
      IbgRamp r;
      r.ibg = jr.value("ibg", 0);
      r.v_target = jr.at("v_target").get<double>();
      r.rate_pu_s = jr.value("rate_pu_s", 0.0005);
      s.ramps.push_back(r);
    }
  }
  return s;
}

ControlSchedule load_schedule(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PfError("cannot open schedule file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schedule(ss.str());
}

QssTrace qss_simulate(const NetworkCase& feeder, const ControlSchedule& sched,
                      double horizon_s) {
  QssTrace trace;
  const LtcRef ltc = find_root_ltc(feeder);
  const int ni = static_cast<int>(feeder.ibgs.size());
  for (const auto& r : sched.ramps)
    if (r.ibg < 0 || r.ibg >= ni || r.rate_pu_s <= 0.0)
      throw PfError("invalid ramp entry in schedule");

  std::vector<double> vset(ni);
  for (int i = 0; i < ni; ++i) vset[i] = feeder.ibgs[i].v_set;

  // pick the starting tap that best regulates the MV bus to the original
  // setpoint
  const int half_range = tap_steps(*ltc.ltc) / 2;
  int tap = 0;
  {
    double best = std::numeric_limits<double>::max();
    OperatingPoint* warm = nullptr;
    for (int idx = -half_range; idx <= half_range; ++idx) {
      ClipSolve s = solve_tick(feeder, ltc, tap_ratio_at(*ltc.ltc, idx), vset, warm);
      if (!s.ok) continue;
      const double err = std::abs(s.point.v_mag(ltc.root) - ltc.ltc->v_set);
      if (err < best) {
        best = err;
        tap = idx;
      }
    }
  }

  double v_reg = sched.ltc ? sched.ltc->v_set : ltc.ltc->v_set;
  double db = sched.ltc ? sched.ltc->deadband_half : ltc.ltc->deadband_half;

  ClipSolve state = solve_tick(feeder, ltc, tap_ratio_at(*ltc.ltc, tap), vset, nullptr);
  if (!state.ok) throw PfError("feeder base state does not converge");

  auto record = [&](double t) {
    QssSample smp;
    smp.t_s = t;
    smp.tap = tap;
    smp.v_d = state.point.v_mag(ltc.root);
    for (int i = 0; i < ni; ++i) {
      const int k = feeder.bus_index(feeder.ibgs[i].bus);
      smp.ibg_v.push_back(state.point.v_mag(k));
      smp.ibg_p_mw.push_back(feeder.ibgs[i].p0_mw);
      smp.ibg_q_mvar.push_back(feeder.pu_to_mw(state.ibg_q_pu[i]));
    }
    smp.p_j_mw = feeder.pu_to_mw(state.flows.p_j);
    smp.q_j_mvar = feeder.pu_to_mw(state.flows.q_j);
    trace.samples.push_back(std::move(smp));
  };
  record(0.0);

  bool first_tap_done = false;
  const bool v_inside0 = std::abs(state.point.v_mag(ltc.root) - v_reg) <= db;
  bool ramps_started = !sched.ltc || v_inside0;
  double outside_timer = 0.0;
  double pending_delay = ltc.ltc->delay_first_s;

  for (double t = 1.0; t <= horizon_s + 1e-9; t += 1.0) {
    // ramps move first within the tick
    if (ramps_started) {
      for (const auto& r : sched.ramps) {
        const double gap = r.v_target - vset[r.ibg];
        if (std::abs(gap) > 1e-12) {
          const double step = std::min(std::abs(gap), r.rate_pu_s);
          vset[r.ibg] += gap > 0 ? step : -step;
        }
      }
    }

    ClipSolve next = solve_tick(feeder, ltc, tap_ratio_at(*ltc.ltc, tap), vset,
                                &state.point);
    if (!next.ok) {
      trace.diverged = true;
      trace.note = "power flow diverged at t=" + std::to_string(t);
      return trace;
    }
    state = next;

    // LTC deadband logic on the freshly solved state
    const double v_d = state.point.v_mag(ltc.root);
    bool tap_pending = false;
    if (std::abs(v_d - v_reg) > db) {
      outside_timer += 1.0;
      const int dir = v_d < v_reg ? +1 : -1;
      const bool in_range = (dir > 0 && tap < half_range) || (dir < 0 && tap > -half_range);
      if (!in_range) {
        trace.tap_exhausted = true;
      } else {
        tap_pending = true;
        if (outside_timer >= pending_delay) {
          tap += dir;
          outside_timer = 0.0;
          pending_delay = ltc.ltc->delay_step_s;
          first_tap_done = true;
          ramps_started = true;
          ClipSolve after = solve_tick(feeder, ltc, tap_ratio_at(*ltc.ltc, tap), vset,
                                       &state.point);
          if (!after.ok) {
            trace.diverged = true;
            trace.note = "power flow diverged after tap step at t=" + std::to_string(t);
            return trace;
          }
          state = after;
          tap_pending = std::abs(state.point.v_mag(ltc.root) - v_reg) > db;
        }
      }
    } else {
      outside_timer = 0.0;
    }

    record(t);

    const bool ramps_done = [&] {
      if (!ramps_started && !sched.ramps.empty()) return false;
      for (const auto& r : sched.ramps)
        if (std::abs(r.v_target - vset[r.ibg]) > 1e-12) return false;
      return true;
    }();
    const double v_now = state.point.v_mag(ltc.root);
    if (!tap_pending && ramps_done &&
        (std::abs(v_now - v_reg) <= db || trace.tap_exhausted)) {
      trace.quiescent = true;
      break;
    }
  }
  (void)first_tap_done;
  return trace;
}

double indirect_shed(double p_k0_mw, double v_d, double v_min, double v_fin, double a) {
  return p_k0_mw / std::pow(v_d, a) * (std::pow(v_min, a) - std::pow(v_fin, a));
}

std::string trace_to_csv(const NetworkCase& feeder, const QssTrace& trace) {
  std::ostringstream os;
  os << "t_s,tap,V_d";
  for (const auto& u : feeder.ibgs)
    os << ",V_" << u.bus << ",P_" << u.bus << "_MW,Q_" << u.bus << "_Mvar";
  os << ",P_j_MW,Q_j_Mvar\n";
  os.precision(10);
  for (const auto& s : trace.samples) {
    os << s.t_s << ',' << s.tap << ',' << s.v_d;
    for (size_t i = 0; i < s.ibg_v.size(); ++i)
      os << ',' << s.ibg_v[i] << ',' << s.ibg_p_mw[i] << ',' << s.ibg_q_mvar[i];
    os << ',' << s.p_j_mw << ',' << s.q_j_mvar << '\n';
  }
  return os.str();
}

}  // namespace gridflex
