#include "gridflex/continuation.hpp"

#include <algorithm>
#include <cmath>

#include "gridflex/capability.hpp"

namespace gridflex {

namespace {

struct LimitedSolve {
  bool ok = false;
  OperatingPoint point;
  std::vector<int> qlim;
};

// Solve at a fixed stress level, switching generators onto their reactive
// limits until the limited set is stable. Machines do not un-switch along a
// monotone ramp.
LimitedSolve solve_with_limits(const NetworkCase& net, const ContinuationOptions& opts,
                               double lambda, const OperatingPoint& warm,
                               std::vector<int> qlim) {
  LimitedSolve out;
  const int ng = static_cast<int>(net.generators.size());
  for (int pass = 0; pass <= 2 * ng; ++pass) {
    PfModel::Options mo;
    mo.adn_delta = opts.adn_delta;
    mo.gen_qlim = qlim;
    PfModel model(net, mo);
    OperatingPoint pt = warm;
    pt.lambda = lambda;
    auto st = model.solve(pt);
    if (!st.converged) return out;
    // wrong-branch guard: a converged point far from the warm start means the
    // iteration jumped past the nose onto the lower solution branch
    for (int k = 0; k < pt.n(); ++k)
      if (std::abs(pt.v_mag(k) - warm.v_mag(k)) > 0.35) return out;
    if (!opts.enforce_gen_limits) {
      out.ok = true;
      out.point = pt;
      out.qlim = std::move(qlim);
      return out;
    }
    Eigen::VectorXd qg = model.recover_gen_q(pt);
    int worst = -1;
    double worst_excess = 1e-7;
    for (int g = 0; g < ng; ++g) {
      const auto& gen = net.generators[g];
      if (!gen.caps) continue;
      if (std::find(qlim.begin(), qlim.end(), g) != qlim.end()) continue;
      const int k = net.bus_index(gen.bus);
      const double v = pt.v_mag(k);
      const double p = model.gen_p_pu(g, pt);
      double lim;
      try {
        const double qa = armature_limit_pu(*gen.caps, p, v);
        const double qr = field_limit_fixed_point(*gen.caps, p, v, qg[g]).q_g;
        lim = std::min(qa, qr);
      } catch (const CapabilityError&) {
        lim = 0.0;
      }
      const double excess = qg[g] - lim;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst = g;
      }
    }
    if (worst < 0) {
      out.ok = true;
      out.point = pt;
      out.qlim = std::move(qlim);
      return out;
    }
    qlim.push_back(worst);
  }
  return out;
}

}  // namespace

ContinuationResult continuation_margin(const NetworkCase& net,
                                       const ContinuationOptions& opts) {
  if (net.stress.empty() || net.stress.total_dp_mw() <= 0.0)
    throw PfError("continuation requires a stress direction with positive total d_p");

  PfModel::Options base_opts;
  base_opts.adn_delta = opts.adn_delta;
  PfModel base_model(net, base_opts);
  OperatingPoint pt = base_model.start_point();
  auto st0 = base_model.solve(pt);
  if (!st0.converged) throw PfError("base case power flow does not converge");

  int trace = opts.trace_bus;
  if (trace < 0 && !net.stress.d_p_mw.empty())
    trace = net.bus_index(net.stress.d_p_mw.begin()->first);
  if (trace < 0) trace = 0;

  const double dp_total = net.stress.total_dp_mw();
  auto stressed_load = [&](double lambda) {
    double s = 0.0;
    for (const auto& [id, dp] : net.stress.d_p_mw) {
      s += lambda * dp;
      for (const auto& l : net.loads)
        if (l.bus == id) s += l.p0_mw;
      for (const auto& a : net.adns)
        if (a.pcc_bus == id) s += a.p0_mw;
    }
    return s;
  };

  ContinuationResult res;
  std::vector<int> qlim;
  {
    LimitedSolve s = solve_with_limits(net, opts, 0.0, pt, qlim);
    if (!s.ok) throw PfError("base case infeasible under generator limits");
    pt = s.point;
    qlim = s.qlim;
  }
  res.curve.push_back({0.0, stressed_load(0.0), pt.v_mag(trace)});

  double lambda = 0.0;
  double step = opts.initial_step;
  int steps = 0;
  while (steps++ < opts.max_steps) {
    if (step < opts.rel_tol * std::max(1.0, std::abs(lambda))) break;
    LimitedSolve s = solve_with_limits(net, opts, lambda + step, pt, qlim);
    if (s.ok) {
      lambda += step;
      pt = s.point;
      qlim = s.qlim;
      res.curve.push_back({lambda, stressed_load(lambda), pt.v_mag(trace)});
    } else {
      step *= 0.5;
    }
  }
  res.lambda_max = lambda;
  res.vsm_mw = lambda * dp_total;
  res.last_point = pt;
  res.q_limited_gens = qlim;
  return res;
}

bool stress_feasible(const NetworkCase& net, double lambda,
                     const ContinuationOptions& opts) {
  // march toward the target level so the warm start tracks the upper branch
  PfModel::Options base_opts;
  base_opts.adn_delta = opts.adn_delta;
  PfModel base_model(net, base_opts);
  OperatingPoint pt = base_model.start_point();
  if (!base_model.solve(pt).converged) return false;
  std::vector<int> qlim;
  {
    LimitedSolve s = solve_with_limits(net, opts, 0.0, pt, qlim);
    if (!s.ok) return false;
    pt = s.point;
    qlim = s.qlim;
  }
  const int n_steps = 8;
  for (int i = 1; i <= n_steps; ++i) {
    const double l = lambda * i / n_steps;
    LimitedSolve s = solve_with_limits(net, opts, l, pt, qlim);
    if (!s.ok) return false;
    pt = s.point;
    qlim = s.qlim;
  }
  return true;
}

}  // namespace gridflex
