#include "gridflex/vsm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "gridflex/capability.hpp"
#include "gridflex/continuation.hpp"

namespace gridflex {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct AdnPoly {
  int adn = -1;
  int bus = -1;
  FlexPolygon poly;  // MW around the declared anchor
};

// Assembled maximal-stress problem over a transmission case. Variable
// layout: [e(N), f(N), qg(ng), delta_loss, lambda, (dp, dq) per flexible ADN].
struct VsmNlp {
  const NetworkCase* net;
  int n = 0, ng = 0;
  int slack = -1;
  Eigen::MatrixXd G, B;
  double sd_pu = 0.0;
  std::vector<double> w_eff;
  std::vector<double> pfix_mw;  // NaN = participating
  std::vector<double> k_sat;    // frozen saturation factor per machine
  std::vector<AdnPoly> flex;

  // per-bus aggregates
  Eigen::VectorXd p_const, q_const, dp_dlam, dq_dlam, dl_w;
  std::vector<std::vector<int>> gens_at;

  int nv() const { return 2 * n + ng + 2 + 2 * static_cast<int>(flex.size()); }
  int ie(int k) const { return k; }
  int iff(int k) const { return n + k; }
  int iqg(int g) const { return 2 * n + g; }
  int idl() const { return 2 * n + ng; }
  int ilam() const { return 2 * n + ng + 1; }
  int idp(int a) const { return 2 * n + ng + 2 + 2 * a; }
  int idq(int a) const { return 2 * n + ng + 2 + 2 * a + 1; }

  void build(const NetworkCase& nc);
  double gen_p_pu(int g, const Eigen::VectorXd& x) const {
    if (!std::isnan(pfix_mw[g])) return net->mw_to_pu(pfix_mw[g]);
    return net->mw_to_pu(net->generators[g].p0_mw) +
           w_eff[g] * (x[idl()] + x[ilam()] * sd_pu);
  }

  Eigen::VectorXd eq(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd eq_jac(const Eigen::VectorXd& x) const;
  Eigen::VectorXd ineq(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd ineq_jac(const Eigen::VectorXd& x) const;
  int n_ineq() const;
};

void VsmNlp::build(const NetworkCase& nc) {
  net = &nc;
  n = nc.n_buses();
  ng = static_cast<int>(nc.generators.size());
  slack = nc.slack_bus();
  if (slack < 0) throw VsmError("case has no slack bus");

  // transmission-side admittances (cases at this scope carry no transformers)
  G = Eigen::MatrixXd::Zero(n, n);
  B = Eigen::MatrixXd::Zero(n, n);
  for (const auto& br : nc.branches) {
    if (!br.in_service) continue;
    const int i = nc.bus_index(br.from);
    const int j = nc.bus_index(br.to);
    const std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
    G(i, i) += y.real();
    B(i, i) += y.imag() + br.b_c / 2.0;
    G(j, j) += y.real();
    B(j, j) += y.imag() + br.b_c / 2.0;
    G(i, j) -= y.real();
    B(i, j) -= y.imag();
    G(j, i) -= y.real();
    B(j, i) -= y.imag();
  }

  sd_pu = nc.mw_to_pu(nc.stress.total_dp_mw());
  p_const = Eigen::VectorXd::Zero(n);
  q_const = Eigen::VectorXd::Zero(n);
  dp_dlam = Eigen::VectorXd::Zero(n);
  dq_dlam = Eigen::VectorXd::Zero(n);
  dl_w = Eigen::VectorXd::Zero(n);
  gens_at.assign(n, {});

  for (const auto& [id, dp] : nc.stress.d_p_mw)
    dp_dlam[nc.bus_index(id)] -= nc.mw_to_pu(dp);
  for (const auto& [id, dq] : nc.stress.d_q_mvar)
    dq_dlam[nc.bus_index(id)] -= nc.mw_to_pu(dq);
  for (const auto& l : nc.loads) {
    p_const[nc.bus_index(l.bus)] -= nc.mw_to_pu(l.p0_mw);
    q_const[nc.bus_index(l.bus)] -= nc.mw_to_pu(l.q0_mvar);
  }
  for (const auto& u : nc.ibgs) {
    p_const[nc.bus_index(u.bus)] += nc.mw_to_pu(u.p0_mw);
    q_const[nc.bus_index(u.bus)] += nc.mw_to_pu(u.q0_mvar);
  }
  for (const auto& a : nc.adns) {
    p_const[nc.bus_index(a.pcc_bus)] -= nc.mw_to_pu(a.p0_mw);
    q_const[nc.bus_index(a.pcc_bus)] -= nc.mw_to_pu(a.q0_mvar);
  }

  double wsum = 0.0;
  for (int g = 0; g < ng; ++g)
    if (std::isnan(pfix_mw[g])) wsum += nc.generators[g].w;
  if (wsum <= 0.0) throw VsmError("no slack capacity: all generators limited");
  w_eff.assign(ng, 0.0);
  for (int g = 0; g < ng; ++g) {
    const auto& gen = nc.generators[g];
    const int k = nc.bus_index(gen.bus);
    gens_at[k].push_back(g);
    if (std::isnan(pfix_mw[g])) {
      w_eff[g] = gen.w / wsum;
      p_const[k] += nc.mw_to_pu(gen.p0_mw);
      dl_w[k] += w_eff[g];
      dp_dlam[k] += w_eff[g] * sd_pu;
    } else {
      p_const[k] += nc.mw_to_pu(pfix_mw[g]);
    }
  }
}

Eigen::VectorXd VsmNlp::eq(const Eigen::VectorXd& x) const {
  const auto e = x.segment(0, n);
  const auto f = x.segment(n, n);
  Eigen::VectorXd a = G * e - B * f;
  Eigen::VectorXd b = G * f + B * e;
  Eigen::VectorXd r(2 * n + 1);
  for (int k = 0; k < n; ++k) {
    double pinj = p_const[k] + x[ilam()] * dp_dlam[k] + x[idl()] * dl_w[k];
    double qinj = q_const[k] + x[ilam()] * dq_dlam[k];
    for (int g : gens_at[k]) qinj += x[iqg(g)];
    r[k] = pinj - (e[k] * a[k] + f[k] * b[k]);
    r[n + k] = qinj - (f[k] * a[k] - e[k] * b[k]);
  }
  for (size_t ai = 0; ai < flex.size(); ++ai) {
    r[flex[ai].bus] -= x[idp(ai)];
    r[n + flex[ai].bus] -= x[idq(ai)];
  }
  r[2 * n] = f[slack];
  return r;
}

Eigen::MatrixXd VsmNlp::eq_jac(const Eigen::VectorXd& x) const {
  const auto e = x.segment(0, n);
  const auto f = x.segment(n, n);
  Eigen::VectorXd a = G * e - B * f;
  Eigen::VectorXd b = G * f + B * e;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n + 1, nv());
  for (int k = 0; k < n; ++k) {
    for (int m = 0; m < n; ++m) {
      const double g = G(k, m), bb = B(k, m);
      double dp_de = e[k] * g + f[k] * bb;
      double dp_df = -e[k] * bb + f[k] * g;
      double dq_de = f[k] * g - e[k] * bb;
      double dq_df = -f[k] * bb - e[k] * g;
      if (m == k) {
        dp_de += a[k];
        dp_df += b[k];
        dq_de -= b[k];
        dq_df += a[k];
      }
      J(k, ie(m)) -= dp_de;
      J(k, iff(m)) -= dp_df;
      J(n + k, ie(m)) -= dq_de;
      J(n + k, iff(m)) -= dq_df;
    }
    J(k, idl()) = dl_w[k];
    J(k, ilam()) = dp_dlam[k];
    J(n + k, ilam()) = dq_dlam[k];
    for (int g : gens_at[k]) J(n + k, iqg(g)) = 1.0;
  }
  for (size_t ai = 0; ai < flex.size(); ++ai) {
    J(flex[ai].bus, idp(ai)) = -1.0;
    J(n + flex[ai].bus, idq(ai)) = -1.0;
  }
  J(2 * n, iff(slack)) = 1.0;
  return J;
}

int VsmNlp::n_ineq() const {
  int m = 0;
  for (int g = 0; g < ng; ++g) {
    m += 1;  // V <= Vref
    if (net->generators[g].caps) m += 2;
  }
  for (const auto& fp : flex) m += fp.poly.size();
  return m;
}

Eigen::VectorXd VsmNlp::ineq(const Eigen::VectorXd& x) const {
  Eigen::VectorXd gv(n_ineq());
  int r = 0;
  for (int g = 0; g < ng; ++g) {
    const auto& gen = net->generators[g];
    const int k = net->bus_index(gen.bus);
    const double v2 = x[ie(k)] * x[ie(k)] + x[iff(k)] * x[iff(k)];
    gv[r++] = gen.v_ref * gen.v_ref - v2;
    if (!gen.caps) continue;
    const auto& c = *gen.caps;
    const double p = gen_p_pu(g, x);
    const double qg = x[iqg(g)];
    gv[r++] = c.i_n_pu * c.i_n_pu * v2 - p * p - qg * qg;
    const double v = std::sqrt(std::max(v2, 1e-12));
    const double e_qs = k_sat[g] * c.e_lim;
    const double x_ds = c.x_l + k_sat[g] * c.x_ad;
    const double q_m = v * (e_qs - v) / x_ds;
    const double p_n = c.p_n_pu();
    const double arm = std::sqrt(std::max(v2 * c.i_n_pu * c.i_n_pu - p_n * p_n, 1e-12));
    const double gamma = (q_m - arm) / p_n;
    gv[r++] = q_m - gamma * p - qg;
  }
  for (size_t ai = 0; ai < flex.size(); ++ai) {
    const double dp_mw = net->pu_to_mw(x[idp(ai)]);
    const double dq_mw = net->pu_to_mw(x[idq(ai)]);
    for (const auto& hp : flex[ai].poly.half_planes())
      gv[r++] = hp.alpha * dp_mw + hp.beta * dq_mw + 1.0;
  }
  return gv;
}

Eigen::MatrixXd VsmNlp::ineq_jac(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n_ineq(), nv());
  int r = 0;
  for (int g = 0; g < ng; ++g) {
    const auto& gen = net->generators[g];
    const int k = net->bus_index(gen.bus);
    const double ek = x[ie(k)], fk = x[iff(k)];
    J(r, ie(k)) = -2.0 * ek;
    J(r, iff(k)) = -2.0 * fk;
    ++r;
    if (!gen.caps) continue;
    const auto& c = *gen.caps;
    const double p = gen_p_pu(g, x);
    const double qg = x[iqg(g)];
    const double dp_ddl = std::isnan(pfix_mw[g]) ? w_eff[g] : 0.0;
    const double dp_dlm = dp_ddl * sd_pu;
    // armature disc
    J(r, ie(k)) = 2.0 * c.i_n_pu * c.i_n_pu * ek;
    J(r, iff(k)) = 2.0 * c.i_n_pu * c.i_n_pu * fk;
    J(r, iqg(g)) = -2.0 * qg;
    J(r, idl()) = -2.0 * p * dp_ddl;
    J(r, ilam()) = -2.0 * p * dp_dlm;
    ++r;
    // linearized field limit at frozen saturation
    const double v2 = std::max(ek * ek + fk * fk, 1e-12);
    const double v = std::sqrt(v2);
    const double e_qs = k_sat[g] * c.e_lim;
    const double x_ds = c.x_l + k_sat[g] * c.x_ad;
    const double p_n = c.p_n_pu();
    const double arm = std::sqrt(std::max(v2 * c.i_n_pu * c.i_n_pu - p_n * p_n, 1e-12));
    const double q_m = v * (e_qs - v) / x_ds;
    const double gamma = (q_m - arm) / p_n;
    const double dqm_dv = (e_qs - 2.0 * v) / x_ds;
    const double darm_dv = v * c.i_n_pu * c.i_n_pu / arm;
    const double dgam_dv = (dqm_dv - darm_dv) / p_n;
    const double dg_dv = dqm_dv - p * dgam_dv;
    J(r, ie(k)) = dg_dv * ek / v;
    J(r, iff(k)) = dg_dv * fk / v;
    J(r, iqg(g)) = -1.0;
    J(r, idl()) = -gamma * dp_ddl;
    J(r, ilam()) = -gamma * dp_dlm;
    ++r;
  }
  for (size_t ai = 0; ai < flex.size(); ++ai) {
    for (const auto& hp : flex[ai].poly.half_planes()) {
      J(r, idp(ai)) = hp.alpha * net->base_mva;
      J(r, idq(ai)) = hp.beta * net->base_mva;
      ++r;
    }
  }
  return J;
}

VsmSolution run_vsm(const NetworkCase& input, const VsmSpec& spec, AdnMode mode) {
  NetworkCase modified;
  const NetworkCase* net = &input;
  if (spec.contingency) {
    modified = apply_contingency(input, *spec.contingency);
    net = &modified;
  }
  if (net->stress.empty() || net->stress.total_dp_mw() <= 0.0)
    throw VsmError("stress direction degenerate: total d_p must be positive");

  // seed from a coarse ramp toward the nose; the NLP polishes from there
  ContinuationOptions copt;
  copt.rel_tol = 2e-2;
  ContinuationResult seed = continuation_margin(*net, copt);

  VsmNlp core;
  core.pfix_mw.assign(net->generators.size(), kNaN);
  core.k_sat.assign(net->generators.size(), 1.0);
  if (mode == AdnMode::Flexible) {
    for (size_t a = 0; a < net->adns.size(); ++a) {
      const auto& adn = net->adns[a];
      if (!adn.polygon || adn.polygon->vertices.size() < 3) continue;
      std::vector<Eigen::Vector2d> ring;
      for (const auto& v : adn.polygon->vertices) ring.push_back({v[0], v[1]});
      FlexPolygon poly;
      try {
        poly = FlexPolygon::from_vertices(std::move(ring), {adn.p0_mw, adn.q0_mvar});
      } catch (const PolygonError& e) {
        throw VsmError("ADN at " + adn.pcc_bus + ": " + e.what());
      }
      core.flex.push_back({static_cast<int>(a), net->bus_index(adn.pcc_bus),
                           std::move(poly)});
    }
  }

  const int ng = static_cast<int>(net->generators.size());
  // initial frozen saturation factors at the seed point
  {
    PfModel::Options mo;
    mo.gen_qlim = seed.q_limited_gens;
    PfModel model(*net, mo);
    Eigen::VectorXd qg = model.recover_gen_q(seed.last_point);
    for (int g = 0; g < ng; ++g) {
      const auto& gen = net->generators[g];
      if (!gen.caps) continue;
      const int k = net->bus_index(gen.bus);
      core.k_sat[g] = field_limit_fixed_point(*gen.caps,
                                              model.gen_p_pu(g, seed.last_point),
                                              seed.last_point.v_mag(k), qg[g])
                          .k;
    }
  }

  VsmSolution out;
  NlpSolution sol;
  int outer = 0;
  for (; outer < 10; ++outer) {
    core.build(*net);
    NlpProblem prob;
    prob.n = core.nv();
    const double sd = core.sd_pu;
    const int ilam = core.ilam();
    prob.objective = [ilam, sd](const Eigen::VectorXd& x) { return -x[ilam] * sd; };
    prob.gradient = [ilam, sd, nv = prob.n](const Eigen::VectorXd&) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(nv);
      g[ilam] = -sd;
      return g;
    };
    prob.eq = [&core](const Eigen::VectorXd& x) { return core.eq(x); };
    prob.eq_jac = [&core](const Eigen::VectorXd& x) { return core.eq_jac(x); };
    prob.ineq = [&core](const Eigen::VectorXd& x) { return core.ineq(x); };
    prob.ineq_jac = [&core](const Eigen::VectorXd& x) { return core.ineq_jac(x); };
    prob.lower = Eigen::VectorXd::Constant(prob.n, -kInf);
    prob.upper = Eigen::VectorXd::Constant(prob.n, kInf);

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(prob.n);
    x0.segment(0, core.n) = seed.last_point.e;
    x0.segment(core.n, core.n) = seed.last_point.f;
    {
      PfModel::Options mo;
      mo.gen_qlim = seed.q_limited_gens;
      PfModel model(*net, mo);
      Eigen::VectorXd qg = model.recover_gen_q(seed.last_point);
      for (int g = 0; g < ng; ++g) x0[core.iqg(g)] = qg[g];
    }
    x0[core.idl()] = seed.last_point.delta_loss;
    x0[core.ilam()] = seed.last_point.lambda;

    sol = solve_nlp(prob, x0, spec.nlp);
    if (!sol.ok())
      throw VsmError("stress maximization did not reach a KKT point: " +
                     sol.diagnostic);

    bool changed = false;
    for (int g = 0; g < ng; ++g) {
      if (!std::isnan(core.pfix_mw[g])) continue;
      const auto& gen = net->generators[g];
      const double p_mw = net->pu_to_mw(core.gen_p_pu(g, sol.x));
      if (p_mw > gen.p_max_mw + 1e-7) {
        core.pfix_mw[g] = gen.p_max_mw;
        changed = true;
      } else if (p_mw < gen.p_min_mw - 1e-7) {
        core.pfix_mw[g] = gen.p_min_mw;
        changed = true;
      }
    }
    double dk_max = 0.0;
    for (int g = 0; g < ng; ++g) {
      const auto& gen = net->generators[g];
      if (!gen.caps) continue;
      const int k = net->bus_index(gen.bus);
      const double v = std::hypot(sol.x[core.ie(k)], sol.x[core.iff(k)]);
      const double knew = field_limit_fixed_point(*gen.caps, core.gen_p_pu(g, sol.x),
                                                  v, sol.x[core.iqg(g)])
                              .k;
      dk_max = std::max(dk_max, std::abs(knew - core.k_sat[g]));
      core.k_sat[g] = knew;
    }
    if (!changed && dk_max < 1e-6) break;
  }
  if (outer >= 10)
    throw VsmError("generator limit outer loop did not settle in 10 passes");

  out.outer_iterations = outer + 1;
  out.lambda_star = sol.x[core.ilam()];
  out.vsm_mw = out.lambda_star * net->stress.total_dp_mw();
  out.point.e = sol.x.segment(0, core.n);
  out.point.f = sol.x.segment(core.n, core.n);
  out.point.delta_loss = sol.x[core.idl()];
  out.point.lambda = out.lambda_star;

  for (int g = 0; g < ng; ++g) {
    const auto& gen = net->generators[g];
    const int k = net->bus_index(gen.bus);
    GenReport gr;
    gr.gen = g;
    gr.bus = gen.bus;
    gr.p_mw = net->pu_to_mw(core.gen_p_pu(g, sol.x));
    gr.q_mvar = net->pu_to_mw(sol.x[core.iqg(g)]);
    gr.v_pu = std::hypot(sol.x[core.ie(k)], sol.x[core.iff(k)]);
    if (!std::isnan(core.pfix_mw[g])) {
      gr.state = GenLimitState::PLimited;
    } else if (gr.v_pu >= gen.v_ref - 1e-6) {
      gr.state = GenLimitState::VoltageControlled;
    } else if (gen.caps) {
      const auto& c = *gen.caps;
      const double p = net->mw_to_pu(gr.p_mw);
      const double q = net->mw_to_pu(gr.q_mvar);
      double qa = kInf, qr = kInf;
      try {
        qa = armature_limit_pu(c, p, gr.v_pu);
      } catch (const CapabilityError&) {
        qa = 0.0;
      }
      qr = field_limit_frozen_pu(c, p, gr.v_pu, core.k_sat[g]);
      gr.state = std::abs(q - qa) <= std::abs(q - qr)
                     ? GenLimitState::ArmatureLimited
                     : GenLimitState::FieldLimited;
    }
    out.gen_report.push_back(gr);
  }

  out.adn_adjustments.assign(net->adns.size(), {});
  out.binding_fr_constraints.assign(net->adns.size(), {});
  for (size_t ai = 0; ai < core.flex.size(); ++ai) {
    const auto& fp = core.flex[ai];
    const double dp_mw = net->pu_to_mw(sol.x[core.idp(ai)]);
    const double dq_mw = net->pu_to_mw(sol.x[core.idq(ai)]);
    out.adn_adjustments[fp.adn] = {dp_mw, dq_mw};
    const auto& hps = fp.poly.half_planes();
    for (size_t i = 0; i < hps.size(); ++i)
      if (hps[i].alpha * dp_mw + hps[i].beta * dq_mw + 1.0 <= 1e-6)
        out.binding_fr_constraints[fp.adn].push_back(static_cast<int>(i));
  }
  out.nlp = std::move(sol);
  return out;
}

}  // namespace

const char* to_string(GenLimitState s) {
  switch (s) {
    case GenLimitState::VoltageControlled: return "voltage-controlled";
    case GenLimitState::ArmatureLimited: return "armature-limited";
    case GenLimitState::FieldLimited: return "field-limited";
    case GenLimitState::PLimited: return "P-limited";
  }
  return "?";
}

VsmSolution solve_vsm(const NetworkCase& net, const VsmSpec& spec) {
  return run_vsm(net, spec, spec.adn_mode);
}

VsmSolution solve_vsm_flex(const NetworkCase& net, const VsmSpec& spec) {
  return run_vsm(net, spec, AdnMode::Flexible);
}

NetworkCase apply_contingency(const NetworkCase& net, const std::string& branch_id) {
  NetworkCase out = net;
  out.rebuild_index();
  int found = -1;
  for (size_t i = 0; i < out.branches.size(); ++i) {
    const auto& br = out.branches[i];
    if (!br.in_service) continue;
    if (br.from + "-" + br.to == branch_id || br.to + "-" + br.from == branch_id) {
      found = static_cast<int>(i);
      break;
    }
  }
  if (found < 0) {
    try {
      const int idx = std::stoi(branch_id);
      if (idx >= 0 && idx < static_cast<int>(out.branches.size())) found = idx;
    } catch (...) {
    }
  }
  if (found < 0) throw VsmError("no such branch: " + branch_id);
  out.branches[found].in_service = false;

  // connectivity over surviving branches and transformers
  const int n = out.n_buses();
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : out.branches) {
    if (!br.in_service) continue;
    const int i = out.bus_index(br.from);
    const int j = out.bus_index(br.to);
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  for (const auto& t : out.transformers) {
    const int i = out.bus_index(t.hv_bus);
    const int j = out.bus_index(t.mv_bus);
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<bool> seen(n, false);
  std::deque<int> q{std::max(out.slack_bus(), 0)};
  seen[q.front()] = true;
  while (!q.empty()) {
    const int k = q.front();
    q.pop_front();
    for (int m : adj[k])
      if (!seen[m]) {
        seen[m] = true;
        q.push_back(m);
      }
  }
  for (int k = 0; k < n; ++k)
    if (!seen[k])
      throw VsmError("contingency islands the network at bus " + out.buses[k].id);
  return out;
}

}  // namespace gridflex
