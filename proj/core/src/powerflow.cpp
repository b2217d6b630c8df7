#include "gridflex/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridflex/capability.hpp"

namespace gridflex {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

PfModel::PfModel(const NetworkCase& net, Options opt)
    : net_(net), opt_(std::move(opt)) {
  n_ = net_.n_buses();
  if (n_ == 0) throw PfError("empty case");
  mode_ = opt_.mode;
  if (mode_ == Mode::Auto)
    mode_ = net_.is_feeder_scope() ? Mode::FeederBoundary : Mode::Transmission;
  if (!opt_.adn_delta.empty() && opt_.adn_delta.size() != net_.adns.size())
    throw PfError("adn_delta size does not match case attachments");
  build_ybus();
  assign_roles();
}

void PfModel::build_ybus() {
  gmat_ = Eigen::MatrixXd::Zero(n_, n_);
  bmat_ = Eigen::MatrixXd::Zero(n_, n_);
  auto stamp = [&](int i, int j, std::complex<double> y, double b_sh) {
    gmat_(i, i) += y.real();
    bmat_(i, i) += y.imag() + b_sh / 2.0;
    gmat_(j, j) += y.real();
    bmat_(j, j) += y.imag() + b_sh / 2.0;
    gmat_(i, j) -= y.real();
    bmat_(i, j) -= y.imag();
    gmat_(j, i) -= y.real();
    bmat_(j, i) -= y.imag();
  };
  for (const auto& br : net_.branches) {
    if (!br.in_service) continue;
    const int i = net_.bus_index(br.from);
    const int j = net_.bus_index(br.to);
    stamp(i, j, 1.0 / std::complex<double>(br.r, br.x), br.b_c);
  }
  if (mode_ == Mode::FeederExplicit) {
    for (size_t t = 0; t < net_.transformers.size(); ++t) {
      const auto& tr = net_.transformers[t];
      const int h = net_.bus_index(tr.hv_bus);
      const int m = net_.bus_index(tr.mv_bus);
      const double rho = t < opt_.tap.size() ? opt_.tap[t] : 1.0;
      const std::complex<double> y = 1.0 / std::complex<double>(0.0, tr.x_t);
      // ideal ratio boosting the MV side by rho, leakage on the HV side
      gmat_(h, h) += (y * rho * rho).real();
      bmat_(h, h) += (y * rho * rho).imag();
      gmat_(m, m) += y.real();
      bmat_(m, m) += y.imag();
      gmat_(h, m) -= (y * rho).real();
      bmat_(h, m) -= (y * rho).imag();
      gmat_(m, h) -= (y * rho).real();
      bmat_(m, h) -= (y * rho).imag();
    }
  }
}

void PfModel::assign_roles() {
  bus_.assign(n_, BusAgg{});
  const double base = net_.base_mva;
  const int ng = static_cast<int>(net_.generators.size());

  // effective participation factors over non-fixed machines
  gen_pfix_.assign(ng, kNaN);
  if (!opt_.gen_pfix.empty()) gen_pfix_ = opt_.gen_pfix;
  eff_w_.assign(ng, 0.0);
  if (!opt_.gen_w.empty()) {
    eff_w_ = opt_.gen_w;
  } else {
    double wsum = 0.0;
    for (int g = 0; g < ng; ++g)
      if (std::isnan(gen_pfix_[g])) wsum += net_.generators[g].w;
    for (int g = 0; g < ng; ++g)
      if (std::isnan(gen_pfix_[g]) && wsum > 0.0)
        eff_w_[g] = net_.generators[g].w / wsum;
  }

  // stress, pu
  sum_dp_ = net_.mw_to_pu(net_.stress.total_dp_mw());
  for (const auto& [id, dp] : net_.stress.d_p_mw)
    bus_[net_.bus_index(id)].dp_dlambda -= net_.mw_to_pu(dp);
  for (const auto& [id, dq] : net_.stress.d_q_mvar)
    bus_[net_.bus_index(id)].dq_dlambda -= net_.mw_to_pu(dq);

  // loads: constant power at transmission scope, voltage-sensitive in feeders
  const bool voltage_sensitive = mode_ != Mode::Transmission;
  for (const auto& l : net_.loads) {
    const int k = net_.bus_index(l.bus);
    if (voltage_sensitive) {
      bus_[k].vloads.push_back({net_.mw_to_pu(l.p0_mw), net_.mw_to_pu(l.q0_mvar),
                                l.v0, l.exp_p, l.exp_q});
    } else {
      bus_[k].p_const_pu -= net_.mw_to_pu(l.p0_mw);
      bus_[k].q_const_pu -= net_.mw_to_pu(l.q0_mvar);
    }
  }

  // IBGs
  for (size_t i = 0; i < net_.ibgs.size(); ++i) {
    const auto& u = net_.ibgs[i];
    const int k = net_.bus_index(u.bus);
    const bool pv = std::find(opt_.ibg_pv.begin(), opt_.ibg_pv.end(),
                              static_cast<int>(i)) != opt_.ibg_pv.end();
    bus_[k].p_const_pu += net_.mw_to_pu(u.p0_mw);
    if (pv) {
      bus_[k].role = QvRole::VMag;
      bus_[k].v_target = i < opt_.ibg_vset.size() ? opt_.ibg_vset[i] : u.v_set;
    } else {
      double q = u.q0_mvar;
      if (i < opt_.ibg_qfix_mvar.size() && !std::isnan(opt_.ibg_qfix_mvar[i]))
        q = opt_.ibg_qfix_mvar[i];
      bus_[k].q_const_pu += net_.mw_to_pu(q);
    }
  }

  // synchronous machines
  for (int g = 0; g < ng; ++g) {
    const auto& gen = net_.generators[g];
    const int k = net_.bus_index(gen.bus);
    if (std::isnan(gen_pfix_[g])) {
      bus_[k].p_const_pu += net_.mw_to_pu(gen.p0_mw);
      bus_[k].dl_weight += eff_w_[g];
      bus_[k].dp_dlambda += eff_w_[g] * sum_dp_;
    } else {
      bus_[k].p_const_pu += net_.mw_to_pu(gen_pfix_[g]);
    }
    const bool qlim = std::find(opt_.gen_qlim.begin(), opt_.gen_qlim.end(), g) !=
                      opt_.gen_qlim.end();
    if (qlim) {
      bus_[k].qlim_gens.push_back(g);
    } else {
      bus_[k].role = QvRole::VMag;
      bus_[k].v_target = gen.v_ref;
    }
  }

  // ADN boundary injections at transmission scope
  for (size_t a = 0; a < net_.adns.size(); ++a) {
    const auto& adn = net_.adns[a];
    const int k = net_.bus_index(adn.pcc_bus);
    double dp = 0.0, dq = 0.0;
    if (a < opt_.adn_delta.size()) {
      dp = opt_.adn_delta[a].dp_mw;
      dq = opt_.adn_delta[a].dq_mvar;
    }
    bus_[k].p_const_pu -= net_.mw_to_pu(adn.p0_mw + dp);
    bus_[k].q_const_pu -= net_.mw_to_pu(adn.q0_mvar + dq);
  }

  slack_ = net_.slack_bus();
  if (slack_ < 0) throw PfError("case has no slack bus");
  root_ = slack_;
  pinned_ = -1;

  switch (mode_) {
    case Mode::Transmission: {
      if (bus_[slack_].role != QvRole::VMag) {
        bus_[slack_].role = QvRole::VMag;
        bus_[slack_].v_target = 1.0;
      }
      double wtot = 0.0;
      for (int g = 0; g < ng; ++g)
        if (std::isnan(gen_pfix_[g])) wtot += eff_w_[g];
      if (wtot <= 0.0)
        throw PfError("no participating generation (all machines limited)");
      break;
    }
    case Mode::FeederBoundary: {
      const TransformerLtc* root_ltc = nullptr;
      for (const auto& t : net_.transformers)
        if (net_.bus_index(t.hv_bus) == slack_) root_ltc = &t;
      if (!root_ltc) throw PfError("feeder case lacks an LTC at the PCC");
      pinned_ = slack_;
      root_ = net_.bus_index(root_ltc->mv_bus);
      x_t_boundary_ = root_ltc->x_t;
      bus_[root_].role = QvRole::VMag;
      bus_[root_].v_target = opt_.root_v.value_or(root_ltc->v_set);
      bus_[root_].dl_weight = 1.0;  // boundary source covers the feeder balance
      break;
    }
    case Mode::FeederExplicit: {
      bus_[slack_].role = QvRole::VMag;
      bus_[slack_].v_target = 1.0;
      bus_[slack_].dl_weight = 1.0;  // delta_loss doubles as the PCC import
      break;
    }
    case Mode::Auto:
      break;
  }
}

double PfModel::qlim_q_pu(int g, double v, const OperatingPoint& pt,
                          double* dq_dv) const {
  const auto& gen = net_.generators[g];
  if (!gen.caps) throw PfError("reactive-limited generator lacks capability data");
  const auto& c = *gen.caps;
  const double p = gen_p_pu(g, pt);
  const double s = v * c.i_n_pu;
  const double arg = std::max(s * s - p * p, 1e-12);
  const double qa = std::sqrt(arg);
  const double dqa_dv = v * c.i_n_pu * c.i_n_pu / qa;

  const auto sat = field_limit_fixed_point(c, p, v);
  const double qr = sat.q_g;
  double dqr_dv = 0.0;
  {
    const double e_qs = sat.k * c.e_lim;
    const double x_ds = c.x_l + sat.k * c.x_ad;
    const double p_n = c.p_n_pu();
    const double arm_pn = std::sqrt(std::max(s * s - p_n * p_n, 1e-12));
    const double dqm_dv = (e_qs - 2.0 * v) / x_ds;
    const double q_m = v * (e_qs - v) / x_ds;
    const double dgamma_dv = (dqm_dv - v * c.i_n_pu * c.i_n_pu / arm_pn) / p_n;
    (void)q_m;
    dqr_dv = dqm_dv - p * dgamma_dv;
  }
  if (qa <= qr) {
    if (dq_dv) *dq_dv = dqa_dv;
    return qa;
  }
  if (dq_dv) *dq_dv = dqr_dv;
  return qr;
}

Eigen::VectorXd PfModel::residual(const OperatingPoint& pt) const {
  if (pt.n() != n_) throw PfError("operating point dimension mismatch");
  Eigen::VectorXd a = gmat_ * pt.e - bmat_ * pt.f;
  Eigen::VectorXd b = gmat_ * pt.f + bmat_ * pt.e;
  Eigen::VectorXd r(2 * n_ + 1);
  for (int k = 0; k < n_; ++k) {
    const double pnet = pt.e[k] * a[k] + pt.f[k] * b[k];
    const double qnet = pt.f[k] * a[k] - pt.e[k] * b[k];
    const auto& bk = bus_[k];
    if (k == pinned_) {
      r[k] = pt.e[k] - 1.0;
      r[n_ + k] = pt.f[k];
      continue;
    }
    double pinj = bk.p_const_pu + pt.lambda * bk.dp_dlambda + bk.dl_weight * pt.delta_loss;
    double qinj = bk.q_const_pu + pt.lambda * bk.dq_dlambda;
    const double v = std::max(pt.v_mag(k), 1e-9);
    for (const auto& vl : bk.vloads) {
      pinj -= vl.p0_pu * std::pow(v / vl.v0, vl.a);
      qinj -= vl.q0_pu * std::pow(v / vl.v0, vl.b);
    }
    for (int g : bk.qlim_gens) qinj += qlim_q_pu(g, v, pt, nullptr);
    r[k] = pinj - pnet;
    if (bk.role == QvRole::VMag)
      r[n_ + k] = pt.v_mag2(k) - bk.v_target * bk.v_target;
    else
      r[n_ + k] = qinj - qnet;
  }
  r[2 * n_] = pt.f[root_];
  return r;
}

Eigen::MatrixXd PfModel::jacobian(const OperatingPoint& pt) const {
  if (pt.n() != n_) throw PfError("operating point dimension mismatch");
  Eigen::VectorXd a = gmat_ * pt.e - bmat_ * pt.f;
  Eigen::VectorXd b = gmat_ * pt.f + bmat_ * pt.e;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n_ + 1, 2 * n_ + 2);
  const int col_dl = 2 * n_;
  const int col_lam = 2 * n_ + 1;

  for (int k = 0; k < n_; ++k) {
    const auto& bk = bus_[k];
    if (k == pinned_) {
      J(k, k) = 1.0;
      J(n_ + k, n_ + k) = 1.0;
      continue;
    }
    // network terms
    for (int m = 0; m < n_; ++m) {
      const double g = gmat_(k, m), bb = bmat_(k, m);
      double dp_de = pt.e[k] * g + pt.f[k] * bb;
      double dp_df = -pt.e[k] * bb + pt.f[k] * g;
      double dq_de = pt.f[k] * g - pt.e[k] * bb;
      double dq_df = -pt.f[k] * bb - pt.e[k] * g;
      if (m == k) {
        dp_de += a[k];
        dp_df += b[k];
        dq_de += -b[k];
        dq_df += a[k];
      }
      J(k, m) -= dp_de;
      J(k, n_ + m) -= dp_df;
      if (bk.role == QvRole::QBalance) {
        J(n_ + k, m) -= dq_de;
        J(n_ + k, n_ + m) -= dq_df;
      }
    }
    if (bk.role == QvRole::VMag) {
      J(n_ + k, k) = 2.0 * pt.e[k];
      J(n_ + k, n_ + k) = 2.0 * pt.f[k];
    }
    // voltage-sensitive loads
    const double v = std::max(pt.v_mag(k), 1e-9);
    for (const auto& vl : bk.vloads) {
      const double dpl_dv = vl.p0_pu * vl.a * std::pow(v / vl.v0, vl.a) / v;
      const double dql_dv = vl.q0_pu * vl.b * std::pow(v / vl.v0, vl.b) / v;
      const double dv_de = pt.e[k] / v, dv_df = pt.f[k] / v;
      J(k, k) -= dpl_dv * dv_de;
      J(k, n_ + k) -= dpl_dv * dv_df;
      if (bk.role == QvRole::QBalance) {
        J(n_ + k, k) -= dql_dv * dv_de;
        J(n_ + k, n_ + k) -= dql_dv * dv_df;
      }
    }
    // machines riding their reactive limit
    for (int g : bk.qlim_gens) {
      double dq_dv = 0.0;
      qlim_q_pu(g, v, pt, &dq_dv);
      if (bk.role == QvRole::QBalance) {
        J(n_ + k, k) += dq_dv * pt.e[k] / v;
        J(n_ + k, n_ + k) += dq_dv * pt.f[k] / v;
      }
    }
    // slack and stress columns
    J(k, col_dl) = bk.dl_weight;
    J(k, col_lam) = bk.dp_dlambda;
    if (bk.role == QvRole::QBalance) J(n_ + k, col_lam) = bk.dq_dlambda;
  }
  J(2 * n_, n_ + root_) = 1.0;
  return J;
}

OperatingPoint PfModel::start_point() const {
  OperatingPoint pt;
  pt.e = Eigen::VectorXd::Ones(n_);
  pt.f = Eigen::VectorXd::Zero(n_);
  for (int k = 0; k < n_; ++k)
    if (bus_[k].role == QvRole::VMag) pt.e[k] = bus_[k].v_target;
  return pt;
}

PfModel::SolveStats PfModel::solve(OperatingPoint& pt, double tol, int max_iter) const {
  SolveStats st;
  Eigen::VectorXd r = residual(pt);
  double rn = r.cwiseAbs().maxCoeff();
  for (int it = 0; it < max_iter; ++it) {
    if (rn <= tol) {
      st.converged = true;
      st.iterations = it;
      st.mismatch = rn;
      return st;
    }
    Eigen::MatrixXd J = jacobian(pt);
    // square system in (e, f, delta_loss); lambda held fixed
    Eigen::MatrixXd Jsq = J.leftCols(2 * n_ + 1);
    Eigen::VectorXd dx = Jsq.colPivHouseholderQr().solve(-r);
    if (!dx.allFinite()) break;
    double alpha = 1.0;
    OperatingPoint trial = pt;
    Eigen::VectorXd rt;
    double rtn = rn;
    for (int h = 0; h <= 8; ++h) {
      trial.e = pt.e + alpha * dx.segment(0, n_);
      trial.f = pt.f + alpha * dx.segment(n_, n_);
      trial.delta_loss = pt.delta_loss + alpha * dx[2 * n_];
      rt = residual(trial);
      rtn = rt.cwiseAbs().maxCoeff();
      if (rtn < rn || h == 8) break;
      alpha *= 0.5;
    }
    pt = trial;
    r = rt;
    rn = rtn;
    st.iterations = it + 1;
  }
  st.converged = rn <= tol;
  st.mismatch = rn;
  return st;
}

double PfModel::p_net(const OperatingPoint& pt, int k) const {
  double ak = 0.0, bk = 0.0;
  for (int m = 0; m < n_; ++m) {
    ak += gmat_(k, m) * pt.e[m] - bmat_(k, m) * pt.f[m];
    bk += gmat_(k, m) * pt.f[m] + bmat_(k, m) * pt.e[m];
  }
  return pt.e[k] * ak + pt.f[k] * bk;
}

double PfModel::q_net(const OperatingPoint& pt, int k) const {
  double ak = 0.0, bk = 0.0;
  for (int m = 0; m < n_; ++m) {
    ak += gmat_(k, m) * pt.e[m] - bmat_(k, m) * pt.f[m];
    bk += gmat_(k, m) * pt.f[m] + bmat_(k, m) * pt.e[m];
  }
  return pt.f[k] * ak - pt.e[k] * bk;
}

double PfModel::gen_p_pu(int g, const OperatingPoint& pt) const {
  if (!std::isnan(gen_pfix_[g])) return net_.mw_to_pu(gen_pfix_[g]);
  return net_.mw_to_pu(net_.generators[g].p0_mw) +
         eff_w_[g] * (pt.delta_loss + pt.lambda * sum_dp_);
}

double PfModel::adn_p_pu(int a, double lambda) const {
  const auto& adn = net_.adns[a];
  double dp = a < static_cast<int>(opt_.adn_delta.size()) ? opt_.adn_delta[a].dp_mw : 0.0;
  double d_stress = 0.0;
  auto it = net_.stress.d_p_mw.find(adn.pcc_bus);
  if (it != net_.stress.d_p_mw.end()) d_stress = it->second;
  return net_.mw_to_pu(adn.p0_mw + dp + lambda * d_stress);
}

double PfModel::adn_q_pu(int a, double lambda) const {
  const auto& adn = net_.adns[a];
  double dq = a < static_cast<int>(opt_.adn_delta.size()) ? opt_.adn_delta[a].dq_mvar : 0.0;
  double d_stress = 0.0;
  auto it = net_.stress.d_q_mvar.find(adn.pcc_bus);
  if (it != net_.stress.d_q_mvar.end()) d_stress = it->second;
  return net_.mw_to_pu(adn.q0_mvar + dq + lambda * d_stress);
}

Eigen::VectorXd PfModel::recover_gen_q(const OperatingPoint& pt) const {
  const int ng = static_cast<int>(net_.generators.size());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(ng);
  // everything at the bus that is not a V-controlled machine
  std::vector<int> vcontrolled(n_, 0);
  for (int g = 0; g < ng; ++g) {
    const int k = net_.bus_index(net_.generators[g].bus);
    const bool qlim = std::find(opt_.gen_qlim.begin(), opt_.gen_qlim.end(), g) !=
                      opt_.gen_qlim.end();
    if (!qlim) ++vcontrolled[k];
  }
  for (int g = 0; g < ng; ++g) {
    const int k = net_.bus_index(net_.generators[g].bus);
    const bool qlim = std::find(opt_.gen_qlim.begin(), opt_.gen_qlim.end(), g) !=
                      opt_.gen_qlim.end();
    const double v = std::max(pt.v_mag(k), 1e-9);
    if (qlim) {
      q[g] = qlim_q_pu(g, v, pt, nullptr);
      continue;
    }
    const auto& bk = bus_[k];
    double qother = bk.q_const_pu + pt.lambda * bk.dq_dlambda;
    for (const auto& vl : bk.vloads) qother -= vl.q0_pu * std::pow(v / vl.v0, vl.b);
    for (int gl : bk.qlim_gens) qother += qlim_q_pu(gl, v, pt, nullptr);
    q[g] = (q_net(pt, k) - qother) / vcontrolled[k];
  }
  return q;
}

Eigen::VectorXd PfModel::recover_ibg_q(const OperatingPoint& pt) const {
  const int ni = static_cast<int>(net_.ibgs.size());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(ni);
  for (int i = 0; i < ni; ++i) {
    const auto& u = net_.ibgs[i];
    const int k = net_.bus_index(u.bus);
    const bool pv = std::find(opt_.ibg_pv.begin(), opt_.ibg_pv.end(), i) !=
                    opt_.ibg_pv.end();
    if (!pv) {
      q[i] = net_.mw_to_pu(u.q0_mvar);
      continue;
    }
    const auto& bk = bus_[k];
    const double v = std::max(pt.v_mag(k), 1e-9);
    double qother = bk.q_const_pu + pt.lambda * bk.dq_dlambda;
    for (const auto& vl : bk.vloads) qother -= vl.q0_pu * std::pow(v / vl.v0, vl.b);
    q[i] = q_net(pt, k) - qother;
  }
  return q;
}

PfModel::BoundaryFlows PfModel::boundary_flows(const OperatingPoint& pt) const {
  BoundaryFlows bf;
  if (mode_ == Mode::FeederBoundary) {
    bf.p_t = pt.delta_loss;
    const auto& bk = bus_[root_];
    const double v = std::max(pt.v_mag(root_), 1e-9);
    double qother = bk.q_const_pu;
    for (const auto& vl : bk.vloads) qother -= vl.q0_pu * std::pow(v / vl.v0, vl.b);
    bf.q_t = q_net(pt, root_) - qother;
    bf.p_j = bf.p_t;
    bf.q_j = bf.q_t + x_t_boundary_ * (bf.p_t * bf.p_t + bf.q_t * bf.q_t) / (v * v);
  } else if (mode_ == Mode::FeederExplicit) {
    bf.p_t = bf.p_j = p_net(pt, slack_);
    bf.q_t = bf.q_j = q_net(pt, slack_);
  }
  return bf;
}

Eigen::VectorXd residual(const NetworkCase& net, const OperatingPoint& pt,
                         std::span<const AdnDelta> adn) {
  PfModel::Options opt;
  opt.adn_delta.assign(adn.begin(), adn.end());
  return PfModel(net, opt).residual(pt);
}

Eigen::MatrixXd jacobian(const NetworkCase& net, const OperatingPoint& pt,
                         std::span<const AdnDelta> adn) {
  PfModel::Options opt;
  opt.adn_delta.assign(adn.begin(), adn.end());
  return PfModel(net, opt).jacobian(pt);
}

PfResult solve_powerflow(const NetworkCase& net, std::optional<OperatingPoint> start,
                         double lambda, std::span<const AdnDelta> adn) {
  PfModel::Options opt;
  opt.adn_delta.assign(adn.begin(), adn.end());
  PfModel model(net, opt);
  OperatingPoint pt = start ? *start : model.start_point();
  pt.lambda = lambda;
  auto st = model.solve(pt);
  if (!st.converged)
    throw PfError("power flow did not converge (mismatch " +
                  std::to_string(st.mismatch) + " pu after " +
                  std::to_string(st.iterations) + " iterations)");
  PfResult res;
  res.point = pt;
  res.iterations = st.iterations;
  res.mismatch = st.mismatch;
  res.gen_q_pu = model.recover_gen_q(pt);
  res.ibg_q_pu = model.recover_ibg_q(pt);
  auto bf = model.boundary_flows(pt);
  res.boundary_p_mw = net.pu_to_mw(bf.p_j);
  res.boundary_q_mvar = net.pu_to_mw(bf.q_j);
  return res;
}

StressedInjections apply_stress(const NetworkCase& net, const StressDirection& dir,
                                double lambda) {
  StressedInjections out;
  out.p_mw.assign(net.n_buses(), 0.0);
  out.q_mvar.assign(net.n_buses(), 0.0);
  for (const auto& l : net.loads) {
    out.p_mw[net.bus_index(l.bus)] += l.p0_mw;
    out.q_mvar[net.bus_index(l.bus)] += l.q0_mvar;
  }
  for (const auto& a : net.adns) {
    out.p_mw[net.bus_index(a.pcc_bus)] += a.p0_mw;
    out.q_mvar[net.bus_index(a.pcc_bus)] += a.q0_mvar;
  }
  for (const auto& [id, dp] : dir.d_p_mw) out.p_mw[net.bus_index(id)] += lambda * dp;
  for (const auto& [id, dq] : dir.d_q_mvar) out.q_mvar[net.bus_index(id)] += lambda * dq;
  return out;
}

std::vector<double> generation_shift(const NetworkCase& net, double dp_mw, double dl_mw,
                                     std::span<const int> limited) {
  const int ng = static_cast<int>(net.generators.size());
  std::vector<bool> is_limited(ng, false);
  for (int g : limited) is_limited[g] = true;
  double wsum = 0.0;
  for (int g = 0; g < ng; ++g)
    if (!is_limited[g]) wsum += net.generators[g].w;
  if (wsum <= 0.0) throw PfError("no slack capacity: all generators limited");
  std::vector<double> shift(ng, 0.0);
  for (int g = 0; g < ng; ++g)
    if (!is_limited[g])
      shift[g] = net.generators[g].w / wsum * (dl_mw + dp_mw);
  return shift;
}

}  // namespace gridflex
