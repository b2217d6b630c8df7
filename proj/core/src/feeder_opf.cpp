#include "gridflex/feeder_opf.hpp"

#include <cmath>
#include <complex>
#include <limits>

namespace gridflex {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> feeder_ybus(const NetworkCase& net) {
  const int n = net.n_buses();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  auto stamp = [&](int i, int j, std::complex<double> y, double b_sh) {
    G(i, i) += y.real();
    B(i, i) += y.imag() + b_sh / 2.0;
    G(j, j) += y.real();
    B(j, j) += y.imag() + b_sh / 2.0;
    G(i, j) -= y.real();
    B(i, j) -= y.imag();
    G(j, i) -= y.real();
    B(j, i) -= y.imag();
  };
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    stamp(net.bus_index(br.from), net.bus_index(br.to),
          1.0 / std::complex<double>(br.r, br.x), br.b_c);
  }
  // transformers inside the feeder (not the boundary LTC) act as series
  // reactances at nominal ratio
  const int slack = net.slack_bus();
  for (const auto& t : net.transformers) {
    if (slack >= 0 && net.bus_index(t.hv_bus) == slack) continue;
    stamp(net.bus_index(t.hv_bus), net.bus_index(t.mv_bus),
          1.0 / std::complex<double>(0.0, t.x_t), 0.0);
  }
  return {G, B};
}

struct FeederOpf::Impl {
  const NetworkCase* net = nullptr;
  int n = 0, ni = 0;
  int pcc = -1, root = -1;
  double x_t = 0.0;
  Eigen::MatrixXd G, B;
  struct LoadPu {
    int bus;
    double p0, q0, v0, a, b;
  };
  std::vector<LoadPu> loads;
  std::vector<int> ibg_bus;
  Eigen::VectorXd vmin2, vmax2;
  double pj0 = 0.0, qj0 = 0.0;  // anchor, pu
  bool has_ray = false;
  double ray_cos = 1.0, ray_sin = 0.0;
  Eigen::VectorXd x0;

  int nv() const { return 2 * n + 2 * ni + 4; }
  int me() const { return 2 * n + 3 + (has_ray ? 1 : 0); }
  int mi() const { return 2 * (n - 1) + ni; }
  int ie(int k) const { return k; }
  int iff(int k) const { return n + k; }
  int ipg(int i) const { return 2 * n + i; }
  int iqg(int i) const { return 2 * n + ni + i; }
  int ipt() const { return 2 * n + 2 * ni; }
  int iqt() const { return 2 * n + 2 * ni + 1; }
  int idp() const { return 2 * n + 2 * ni + 2; }
  int idq() const { return 2 * n + 2 * ni + 3; }

  Eigen::VectorXd eq(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd eq_jac(const Eigen::VectorXd& x) const;
  Eigen::VectorXd ineq(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd ineq_jac(const Eigen::VectorXd& x) const;
};

Eigen::VectorXd FeederOpf::Impl::eq(const Eigen::VectorXd& x) const {
  const auto e = x.segment(0, n);
  const auto f = x.segment(n, n);
  Eigen::VectorXd a = G * e - B * f;
  Eigen::VectorXd b = G * f + B * e;
  Eigen::VectorXd r(me());
  Eigen::VectorXd pinj = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd qinj = Eigen::VectorXd::Zero(n);
  for (const auto& l : loads) {
    const double v = std::sqrt(std::max(e[l.bus] * e[l.bus] + f[l.bus] * f[l.bus], 1e-18));
    pinj[l.bus] -= l.p0 * std::pow(v / l.v0, l.a);
    qinj[l.bus] -= l.q0 * std::pow(v / l.v0, l.b);
  }
  for (int i = 0; i < ni; ++i) {
    pinj[ibg_bus[i]] += x[ipg(i)];
    qinj[ibg_bus[i]] += x[iqg(i)];
  }
  pinj[root] += x[ipt()];
  qinj[root] += x[iqt()];
  for (int k = 0; k < n; ++k) {
    if (k == pcc) {
      r[k] = e[k] - 1.0;
      r[n + k] = f[k];
      continue;
    }
    r[k] = pinj[k] - (e[k] * a[k] + f[k] * b[k]);
    r[n + k] = qinj[k] - (f[k] * a[k] - e[k] * b[k]);
  }
  r[2 * n] = f[root];
  const double vd2 = e[root] * e[root] + f[root] * f[root];
  const double pt = x[ipt()], qt = x[iqt()];
  r[2 * n + 1] = x[idp()] - (pt - pj0);
  r[2 * n + 2] = x[idq()] - (qt + x_t * (pt * pt + qt * qt) / vd2 - qj0);
  if (has_ray) r[2 * n + 3] = ray_cos * x[idq()] - ray_sin * x[idp()];
  return r;
}

Eigen::MatrixXd FeederOpf::Impl::eq_jac(const Eigen::VectorXd& x) const {
  const auto e = x.segment(0, n);
  const auto f = x.segment(n, n);
  Eigen::VectorXd a = G * e - B * f;
  Eigen::VectorXd b = G * f + B * e;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(me(), nv());
  for (int k = 0; k < n; ++k) {
    if (k == pcc) {
      J(k, ie(k)) = 1.0;
      J(n + k, iff(k)) = 1.0;
      continue;
    }
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
  }
  for (const auto& l : loads) {
    const int k = l.bus;
    if (k == pcc) continue;
    const double v = std::sqrt(std::max(e[k] * e[k] + f[k] * f[k], 1e-18));
    const double dpl_dv = l.p0 * l.a * std::pow(v / l.v0, l.a) / v;
    const double dql_dv = l.q0 * l.b * std::pow(v / l.v0, l.b) / v;
    J(k, ie(k)) -= dpl_dv * e[k] / v;
    J(k, iff(k)) -= dpl_dv * f[k] / v;
    J(n + k, ie(k)) -= dql_dv * e[k] / v;
    J(n + k, iff(k)) -= dql_dv * f[k] / v;
  }
  for (int i = 0; i < ni; ++i) {
    J(ibg_bus[i], ipg(i)) += 1.0;
    J(n + ibg_bus[i], iqg(i)) += 1.0;
  }
  J(root, ipt()) += 1.0;
  J(n + root, iqt()) += 1.0;
  J(2 * n, iff(root)) = 1.0;

  const double vd2 = e[root] * e[root] + f[root] * f[root];
  const double pt = x[ipt()], qt = x[iqt()];
  J(2 * n + 1, idp()) = 1.0;
  J(2 * n + 1, ipt()) = -1.0;
  J(2 * n + 2, idq()) = 1.0;
  J(2 * n + 2, iqt()) = -(1.0 + 2.0 * x_t * qt / vd2);
  J(2 * n + 2, ipt()) = -2.0 * x_t * pt / vd2;
  const double s2 = pt * pt + qt * qt;
  J(2 * n + 2, ie(root)) = 2.0 * x_t * s2 * e[root] / (vd2 * vd2);
  J(2 * n + 2, iff(root)) = 2.0 * x_t * s2 * f[root] / (vd2 * vd2);
  if (has_ray) {
    J(2 * n + 3, idq()) = ray_cos;
    J(2 * n + 3, idp()) = -ray_sin;
  }
  return J;
}

Eigen::VectorXd FeederOpf::Impl::ineq(const Eigen::VectorXd& x) const {
  const auto e = x.segment(0, n);
  const auto f = x.segment(n, n);
  Eigen::VectorXd g(mi());
  int r = 0;
  for (int k = 0; k < n; ++k) {
    if (k == pcc) continue;
    const double v2 = e[k] * e[k] + f[k] * f[k];
    g[r++] = v2 - vmin2[k];
    g[r++] = vmax2[k] - v2;
  }
  for (int i = 0; i < ni; ++i) {
    const int k = ibg_bus[i];
    const double v2 = e[k] * e[k] + f[k] * f[k];
    const double in = net->ibgs[i].i_n_pu;
    g[r++] = in * in * v2 - x[ipg(i)] * x[ipg(i)] - x[iqg(i)] * x[iqg(i)];
  }
  return g;
}

Eigen::MatrixXd FeederOpf::Impl::ineq_jac(const Eigen::VectorXd& x) const {
  const auto e = x.segment(0, n);
  const auto f = x.segment(n, n);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(mi(), nv());
  int r = 0;
  for (int k = 0; k < n; ++k) {
    if (k == pcc) continue;
    J(r, ie(k)) = 2.0 * e[k];
    J(r, iff(k)) = 2.0 * f[k];
    ++r;
    J(r, ie(k)) = -2.0 * e[k];
    J(r, iff(k)) = -2.0 * f[k];
    ++r;
  }
  for (int i = 0; i < ni; ++i) {
    const int k = ibg_bus[i];
    const double in = net->ibgs[i].i_n_pu;
    J(r, ie(k)) = 2.0 * in * in * e[k];
    J(r, iff(k)) = 2.0 * in * in * f[k];
    J(r, ipg(i)) = -2.0 * x[ipg(i)];
    J(r, iqg(i)) = -2.0 * x[iqg(i)];
    ++r;
  }
  return J;
}

FeederOpf::FeederOpf(const NetworkCase& feeder) : impl_(std::make_shared<Impl>()) {
  auto& im = *impl_;
  im.net = &feeder;
  im.n = feeder.n_buses();
  im.ni = static_cast<int>(feeder.ibgs.size());
  im.pcc = feeder.slack_bus();
  if (im.pcc < 0) throw PfError("feeder case has no slack (PCC) bus");
  const TransformerLtc* ltc = nullptr;
  for (const auto& t : feeder.transformers)
    if (feeder.bus_index(t.hv_bus) == im.pcc) ltc = &t;
  if (!ltc) throw PfError("feeder case lacks an LTC at the PCC");
  im.root = feeder.bus_index(ltc->mv_bus);
  im.x_t = ltc->x_t;
  std::tie(im.G, im.B) = feeder_ybus(feeder);
  for (const auto& l : feeder.loads)
    im.loads.push_back({feeder.bus_index(l.bus), feeder.mw_to_pu(l.p0_mw),
                        feeder.mw_to_pu(l.q0_mvar), l.v0, l.exp_p, l.exp_q});
  for (const auto& u : feeder.ibgs) im.ibg_bus.push_back(feeder.bus_index(u.bus));
  im.vmin2.resize(im.n);
  im.vmax2.resize(im.n);
  for (int k = 0; k < im.n; ++k) {
    im.vmin2[k] = feeder.buses[k].v_min * feeder.buses[k].v_min;
    im.vmax2[k] = feeder.buses[k].v_max * feeder.buses[k].v_max;
  }

  // anchor from the solved base case
  PfResult base = solve_powerflow(feeder, std::nullopt);
  PfModel model(feeder);
  auto bf = model.boundary_flows(base.point);
  im.pj0 = bf.p_j;
  im.qj0 = bf.q_j;

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(im.nv());
  x0.segment(0, im.n) = base.point.e;
  x0.segment(im.n, im.n) = base.point.f;
  for (int i = 0; i < im.ni; ++i) {
    x0[im.ipg(i)] = feeder.mw_to_pu(feeder.ibgs[i].p0_mw);
    x0[im.iqg(i)] = feeder.mw_to_pu(feeder.ibgs[i].q0_mvar);
  }
  x0[im.ipt()] = bf.p_t;
  x0[im.iqt()] = bf.q_t;
  im.x0 = x0;
}

const NetworkCase& FeederOpf::feeder() const { return *impl_->net; }
int FeederOpf::n_vars() const { return impl_->nv(); }
int FeederOpf::n_bus() const { return impl_->n; }
int FeederOpf::n_ibg() const { return impl_->ni; }
int FeederOpf::idx_e(int k) const { return impl_->ie(k); }
int FeederOpf::idx_f(int k) const { return impl_->iff(k); }
int FeederOpf::idx_pg(int i) const { return impl_->ipg(i); }
int FeederOpf::idx_qg(int i) const { return impl_->iqg(i); }
int FeederOpf::idx_pt() const { return impl_->ipt(); }
int FeederOpf::idx_qt() const { return impl_->iqt(); }
int FeederOpf::idx_dp() const { return impl_->idp(); }
int FeederOpf::idx_dq() const { return impl_->idq(); }
double FeederOpf::anchor_p_mw() const { return impl_->net->pu_to_mw(impl_->pj0); }
double FeederOpf::anchor_q_mvar() const { return impl_->net->pu_to_mw(impl_->qj0); }
int FeederOpf::n_ineq() const { return impl_->mi(); }

void FeederOpf::set_ray(double cos_theta, double sin_theta) {
  impl_->has_ray = true;
  impl_->ray_cos = cos_theta;
  impl_->ray_sin = sin_theta;
}

FeederOpf FeederOpf::with_ray(double cos_theta, double sin_theta) const {
  FeederOpf copy = *this;
  copy.impl_ = std::make_shared<Impl>(*impl_);
  copy.set_ray(cos_theta, sin_theta);
  return copy;
}

NlpProblem FeederOpf::constraints() const {
  NlpProblem p;
  auto im = impl_;
  p.n = im->nv();
  p.eq = [im](const Eigen::VectorXd& x) { return im->eq(x); };
  p.eq_jac = [im](const Eigen::VectorXd& x) { return im->eq_jac(x); };
  p.ineq = [im](const Eigen::VectorXd& x) { return im->ineq(x); };
  p.ineq_jac = [im](const Eigen::VectorXd& x) { return im->ineq_jac(x); };
  p.lower = Eigen::VectorXd::Constant(p.n, -kInf);
  p.upper = Eigen::VectorXd::Constant(p.n, kInf);
  for (int i = 0; i < im->ni; ++i) {
    p.lower[im->ipg(i)] = im->net->mw_to_pu(im->net->ibgs[i].p_min_mw);
    p.upper[im->ipg(i)] = im->net->mw_to_pu(im->net->ibgs[i].p_max_mw);
  }
  return p;
}

Eigen::VectorXd FeederOpf::start() const { return impl_->x0; }

std::string FeederOpf::ineq_label(int i) const {
  const auto& im = *impl_;
  int r = 0;
  for (int k = 0; k < im.n; ++k) {
    if (k == im.pcc) continue;
    if (r == i) return "Vmin@" + im.net->buses[k].id;
    ++r;
    if (r == i) return "Vmax@" + im.net->buses[k].id;
    ++r;
  }
  for (int u = 0; u < im.ni; ++u) {
    if (r == i) return "Imax@" + im.net->ibgs[u].bus;
    ++r;
  }
  return "ineq[" + std::to_string(i) + "]";
}

std::pair<double, double> FeederOpf::pcc_flows_mw(const Eigen::VectorXd& x) const {
  const auto& im = *impl_;
  return {im.net->pu_to_mw(im.pj0 + x[im.idp()]),
          im.net->pu_to_mw(im.qj0 + x[im.idq()])};
}

PfModel::BoundaryFlows boundary_from_state(const NetworkCase& feeder,
                                           const OperatingPoint& pt) {
  const int pcc = feeder.slack_bus();
  const TransformerLtc* ltc = nullptr;
  for (const auto& t : feeder.transformers)
    if (feeder.bus_index(t.hv_bus) == pcc) ltc = &t;
  if (!ltc) throw PfError("feeder case lacks an LTC at the PCC");
  const int root = feeder.bus_index(ltc->mv_bus);
  auto [G, B] = feeder_ybus(feeder);
  const int n = feeder.n_buses();
  double ar = 0.0, br = 0.0;
  for (int m = 0; m < n; ++m) {
    ar += G(root, m) * pt.e[m] - B(root, m) * pt.f[m];
    br += G(root, m) * pt.f[m] + B(root, m) * pt.e[m];
  }
  const double pnet = pt.e[root] * ar + pt.f[root] * br;
  const double qnet = pt.f[root] * ar - pt.e[root] * br;
  const double v = pt.v_mag(root);
  double pload = 0.0, qload = 0.0;
  for (const auto& l : feeder.loads) {
    if (feeder.bus_index(l.bus) != root) continue;
    pload += feeder.mw_to_pu(l.p0_mw) * std::pow(v / l.v0, l.exp_p);
    qload += feeder.mw_to_pu(l.q0_mvar) * std::pow(v / l.v0, l.exp_q);
  }
  double pgen = 0.0, qgen = 0.0;
  for (const auto& u : feeder.ibgs) {
    if (feeder.bus_index(u.bus) != root) continue;
    pgen += feeder.mw_to_pu(u.p0_mw);
    qgen += feeder.mw_to_pu(u.q0_mvar);
  }
  PfModel::BoundaryFlows bf;
  bf.p_t = pload - pgen + pnet;
  bf.q_t = qload - qgen + qnet;
  bf.p_j = bf.p_t;
  bf.q_j = bf.q_t + ltc->x_t * (bf.p_t * bf.p_t + bf.q_t * bf.q_t) / (v * v);
  return bf;
}

}  // namespace gridflex
