#include "gridflex/tracking.hpp"

#include <cmath>

#include "gridflex/feeder_opf.hpp"

namespace gridflex {

TrackResult track_setpoint(const NetworkCase& feeder, const SetpointCommand& cmd,
                           const NlpOptions& opts) {
  FeederOpf fo(feeder);
  NlpProblem prob = fo.constraints();
  const double dp_ref = feeder.mw_to_pu(cmd.p_ref_mw - fo.anchor_p_mw());
  const double dq_ref = feeder.mw_to_pu(cmd.q_ref_mvar - fo.anchor_q_mvar());
  const int idp = fo.idx_dp(), idq = fo.idx_dq();
  // squared distance: same minimizer as the Euclidean distance, smooth at 0
  prob.objective = [=](const Eigen::VectorXd& x) {
    const double ap = x[idp] - dp_ref;
    const double aq = x[idq] - dq_ref;
    return ap * ap + aq * aq;
  };
  prob.gradient = [=, n = prob.n](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    g[idp] = 2.0 * (x[idp] - dp_ref);
    g[idq] = 2.0 * (x[idq] - dq_ref);
    return g;
  };
  NlpSolution sol = solve_nlp(prob, fo.start(), opts);
  if (sol.status == NlpStatus::NumericalFailure || sol.status == NlpStatus::Infeasible)
    throw PfError("setpoint tracking failed: " + sol.diagnostic);

  TrackResult res;
  auto [pj, qj] = fo.pcc_flows_mw(sol.x);
  res.achieved_p_mw = pj;
  res.achieved_q_mvar = qj;
  res.distance_mva = std::hypot(pj - cmd.p_ref_mw, qj - cmd.q_ref_mvar);
  const int root = [&] {
    for (const auto& t : feeder.transformers)
      if (feeder.bus_index(t.hv_bus) == feeder.slack_bus())
        return feeder.bus_index(t.mv_bus);
    return 0;
  }();
  res.v_d = std::hypot(sol.x[fo.idx_e(root)], sol.x[fo.idx_f(root)]);
  for (int i = 0; i < fo.n_ibg(); ++i) {
    const int k = feeder.bus_index(feeder.ibgs[i].bus);
    res.ibg_v.push_back(std::hypot(sol.x[fo.idx_e(k)], sol.x[fo.idx_f(k)]));
    res.ibg_p_mw.push_back(feeder.pu_to_mw(sol.x[fo.idx_pg(i)]));
    res.ibg_q_mvar.push_back(feeder.pu_to_mw(sol.x[fo.idx_qg(i)]));
  }
  res.nlp = std::move(sol);
  return res;
}

}  // namespace gridflex
