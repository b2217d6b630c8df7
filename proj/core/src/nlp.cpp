#include "gridflex/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gridflex {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpResult {
  bool ok = false;
  Eigen::VectorXd d;
  Eigen::VectorXd y;  // equality multipliers
  Eigen::VectorXd z;  // inequality multipliers (>= 0)
};

// Convex QP via Mehrotra predictor-corrector:
//   min 1/2 d'Bd + g'd   s.t.  A d = be,  C d >= bi.
QpResult solve_qp(const Eigen::MatrixXd& B, const Eigen::VectorXd& g,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& be,
                  const Eigen::MatrixXd& C, const Eigen::VectorXd& bi) {
  const int n = static_cast<int>(g.size());
  const int me = static_cast<int>(be.size());
  const int mi = static_cast<int>(bi.size());
  QpResult res;
  res.d = Eigen::VectorXd::Zero(n);
  res.y = Eigen::VectorXd::Zero(me);
  res.z = Eigen::VectorXd::Zero(mi);

  if (mi == 0) {
    // single saddle-point solve
    Eigen::MatrixXd K(n + me, n + me);
    K.setZero();
    K.topLeftCorner(n, n) = B;
    if (me > 0) {
      K.topRightCorner(n, me) = A.transpose();
      K.bottomLeftCorner(me, n) = A;
      K.bottomRightCorner(me, me) -= 1e-12 * Eigen::MatrixXd::Identity(me, me);
    }
    Eigen::VectorXd rhs(n + me);
    rhs.head(n) = -g;
    rhs.tail(me) = be;
    Eigen::VectorXd sol = K.ldlt().solve(rhs);
    if (!sol.allFinite()) return res;
    res.d = sol.head(n);
    res.y = -sol.tail(me);  // symmetric form carries the negated multiplier
    res.ok = true;
    return res;
  }

  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd s(mi), z(mi);
  for (int i = 0; i < mi; ++i) {
    s[i] = std::max(1.0, std::abs(bi[i]));
    z[i] = 1.0;
  }

  const double scale = std::max({1.0, g.lpNorm<Eigen::Infinity>(),
                                 me ? be.lpNorm<Eigen::Infinity>() : 0.0,
                                 bi.lpNorm<Eigen::Infinity>()});
  const double tol = 1e-10 * scale;

  for (int iter = 0; iter < 60; ++iter) {
    Eigen::VectorXd rd = B * d + g - C.transpose() * z;
    if (me > 0) rd -= A.transpose() * y;
    Eigen::VectorXd rp = me > 0 ? Eigen::VectorXd(A * d - be) : Eigen::VectorXd();
    Eigen::VectorXd ri = C * d - s - bi;
    const double mu = s.dot(z) / mi;
    const double rnorm = std::max({rd.lpNorm<Eigen::Infinity>(),
                                   me ? rp.lpNorm<Eigen::Infinity>() : 0.0,
                                   ri.lpNorm<Eigen::Infinity>()});
    if (rnorm <= tol && mu <= tol) {
      res.d = d;
      res.y = y;
      res.z = z;
      res.ok = true;
      return res;
    }

    Eigen::VectorXd sinv_z = z.cwiseQuotient(s);
    Eigen::MatrixXd H = B + C.transpose() * sinv_z.asDiagonal() * C;

    auto solve_kkt = [&](const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
                         Eigen::VectorXd& dd, Eigen::VectorXd& dy) -> bool {
      if (me == 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        dd = ldlt.solve(r1);
        dy.resize(0);
        return dd.allFinite();
      }
      Eigen::MatrixXd K(n + me, n + me);
      K.setZero();
      K.topLeftCorner(n, n) = H;
      K.topRightCorner(n, me) = A.transpose();
      K.bottomLeftCorner(me, n) = A;
      K.bottomRightCorner(me, me) -= 1e-12 * Eigen::MatrixXd::Identity(me, me);
      Eigen::VectorXd rhs(n + me);
      rhs.head(n) = r1;
      rhs.tail(me) = r2;
      Eigen::VectorXd sol = K.ldlt().solve(rhs);
      if (!sol.allFinite()) return false;
      dd = sol.head(n);
      dy = -sol.tail(me);
      return true;
    };

    // affine (predictor) direction
    Eigen::VectorXd rc_aff = s.cwiseProduct(z);
    Eigen::VectorXd r1 = -rd - C.transpose() * (rc_aff.cwiseQuotient(s) +
                                                sinv_z.cwiseProduct(ri));
    Eigen::VectorXd dd_aff, dy_aff;
    if (!solve_kkt(r1, me > 0 ? Eigen::VectorXd(-rp) : Eigen::VectorXd(), dd_aff, dy_aff))
      return res;
    Eigen::VectorXd ds_aff = C * dd_aff + ri;
    Eigen::VectorXd dz_aff =
        (rc_aff + z.cwiseProduct(ds_aff)).cwiseQuotient(s) * -1.0;

    auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (int i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
      return a;
    };
    const double ap_aff = max_step(s, ds_aff);
    const double ad_aff = max_step(z, dz_aff);
    const double mu_aff =
        (s + ap_aff * ds_aff).dot(z + ad_aff * dz_aff) / mi;
    const double sigma = std::pow(mu_aff / mu, 3.0);

    // corrector
    Eigen::VectorXd rc = s.cwiseProduct(z) + ds_aff.cwiseProduct(dz_aff) -
                         Eigen::VectorXd::Constant(mi, sigma * mu);
    r1 = -rd - C.transpose() * (rc.cwiseQuotient(s) + sinv_z.cwiseProduct(ri));
    Eigen::VectorXd dd, dy;
    if (!solve_kkt(r1, me > 0 ? Eigen::VectorXd(-rp) : Eigen::VectorXd(), dd, dy))
      return res;
    Eigen::VectorXd ds = C * dd + ri;
    Eigen::VectorXd dz = (rc + z.cwiseProduct(ds)).cwiseQuotient(s) * -1.0;

    const double ap = 0.995 * max_step(s, ds);
    const double ad = 0.995 * max_step(z, dz);
    d += ap * dd;
    s += ap * ds;
    y += ad * dy;
    z += ad * dz;
  }
  // accept a nearly-converged iterate
  Eigen::VectorXd rd = B * d + g - C.transpose() * z;
  if (me > 0) rd -= A.transpose() * y;
  Eigen::VectorXd ri = C * d - s - bi;
  if (rd.lpNorm<Eigen::Infinity>() < 1e-6 * scale &&
      ri.lpNorm<Eigen::Infinity>() < 1e-6 * scale) {
    res.d = d;
    res.y = y;
    res.z = z;
    res.ok = true;
  }
  return res;
}

// Elastic relaxation: slacks on every constraint with linear penalty rho,
// always feasible. Variables [d; p; q; t]: A d + p - q = be with p,q >= 0;
// C d + t >= bi with t >= 0.
QpResult solve_qp_elastic(const Eigen::MatrixXd& B, const Eigen::VectorXd& g,
                          const Eigen::MatrixXd& A, const Eigen::VectorXd& be,
                          const Eigen::MatrixXd& C, const Eigen::VectorXd& bi,
                          double rho) {
  const int n = static_cast<int>(g.size());
  const int me = static_cast<int>(be.size());
  const int mi = static_cast<int>(bi.size());
  const int nx = n + 2 * me + mi;

  Eigen::MatrixXd Bx = Eigen::MatrixXd::Zero(nx, nx);
  Bx.topLeftCorner(n, n) = B;
  Bx.diagonal().tail(2 * me + mi).setConstant(1e-8);
  Eigen::VectorXd gx = Eigen::VectorXd::Zero(nx);
  gx.head(n) = g;
  gx.tail(2 * me + mi).setConstant(rho);

  Eigen::MatrixXd Ax(me, nx);
  if (me > 0) {
    Ax.setZero();
    Ax.leftCols(n) = A;
    Ax.block(0, n, me, me) = Eigen::MatrixXd::Identity(me, me);
    Ax.block(0, n + me, me, me) = -Eigen::MatrixXd::Identity(me, me);
  }

  // inequality block: [C d + t >= bi; p >= 0; q >= 0; t >= 0]
  const int mix = mi + 2 * me + mi;
  Eigen::MatrixXd Cx = Eigen::MatrixXd::Zero(mix, nx);
  Eigen::VectorXd bix = Eigen::VectorXd::Zero(mix);
  Cx.topLeftCorner(mi, n) = C;
  Cx.block(0, n + 2 * me, mi, mi) = Eigen::MatrixXd::Identity(mi, mi);
  bix.head(mi) = bi;
  Cx.block(mi, n, 2 * me + mi, 2 * me + mi) =
      Eigen::MatrixXd::Identity(2 * me + mi, 2 * me + mi);

  QpResult inner = solve_qp(Bx, gx, Ax, be, Cx, bix);
  QpResult res;
  if (!inner.ok) return res;
  res.ok = true;
  res.d = inner.d.head(n);
  res.y = inner.y;
  res.z = inner.z.head(mi);
  return res;
}

struct Evaluation {
  double f = 0.0;
  Eigen::VectorXd grad, ce, ci;
  Eigen::MatrixXd je, ji;
};

}  // namespace

NlpSolution solve_nlp(const NlpProblem& prob, const Eigen::VectorXd& x0,
                      const NlpOptions& opts) {
  const int n = prob.n;
  NlpSolution sol;
  if (x0.size() != n) {
    sol.diagnostic = "start vector dimension mismatch";
    return sol;
  }

  // fold finite box bounds into the general inequality list
  std::vector<std::pair<int, int>> bound_rows;  // (variable, +1 lower / -1 upper)
  for (int i = 0; i < n; ++i) {
    if (prob.lower.size() == n && prob.lower[i] > -kInf) bound_rows.push_back({i, +1});
    if (prob.upper.size() == n && prob.upper[i] < kInf) bound_rows.push_back({i, -1});
  }

  auto evaluate = [&](const Eigen::VectorXd& x) {
    Evaluation ev;
    ev.f = prob.objective(x);
    ev.grad = prob.gradient(x);
    if (prob.eq) {
      ev.ce = prob.eq(x);
      ev.je = prob.eq_jac(x);
    } else {
      ev.ce.resize(0);
      ev.je.resize(0, n);
    }
    const int mg = prob.ineq ? static_cast<int>(prob.ineq(x).size()) : 0;
    const int mi = mg + static_cast<int>(bound_rows.size());
    ev.ci.resize(mi);
    ev.ji = Eigen::MatrixXd::Zero(mi, n);
    if (prob.ineq) {
      ev.ci.head(mg) = prob.ineq(x);
      ev.ji.topRows(mg) = prob.ineq_jac(x);
    }
    for (size_t r = 0; r < bound_rows.size(); ++r) {
      const auto [i, sgn] = bound_rows[r];
      if (sgn > 0) {
        ev.ci[mg + r] = x[i] - prob.lower[i];
        ev.ji(mg + r, i) = 1.0;
      } else {
        ev.ci[mg + r] = prob.upper[i] - x[i];
        ev.ji(mg + r, i) = -1.0;
      }
    }
    return ev;
  };

  Eigen::VectorXd x = x0;
  Evaluation ev = evaluate(x);
  const int me = static_cast<int>(ev.ce.size());
  const int mi = static_cast<int>(ev.ci.size());
  const int mg = mi - static_cast<int>(bound_rows.size());

  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(mi);
  double mu_merit = 1.0;

  auto merit = [&](const Evaluation& e) {
    double viol = 0.0;
    for (int i = 0; i < me; ++i) viol += std::abs(e.ce[i]);
    for (int i = 0; i < mi; ++i) viol += std::max(0.0, -e.ci[i]);
    return e.f + mu_merit * viol;
  };
  auto violation_l1 = [&](const Evaluation& e) {
    double viol = 0.0;
    for (int i = 0; i < me; ++i) viol += std::abs(e.ce[i]);
    for (int i = 0; i < mi; ++i) viol += std::max(0.0, -e.ci[i]);
    return viol;
  };
  auto kkt = [&](const Evaluation& e, double& stat, double& feas, double& comp) {
    Eigen::VectorXd lg = e.grad;
    if (me > 0) lg -= e.je.transpose() * y;
    if (mi > 0) lg -= e.ji.transpose() * z;
    stat = lg.lpNorm<Eigen::Infinity>();
    feas = 0.0;
    for (int i = 0; i < me; ++i) feas = std::max(feas, std::abs(e.ce[i]));
    for (int i = 0; i < mi; ++i) feas = std::max(feas, -e.ci[i]);
    comp = 0.0;
    for (int i = 0; i < mi; ++i) comp = std::max(comp, std::abs(z[i] * e.ci[i]));
  };

  for (int it = 0; it < opts.max_iter; ++it) {
    sol.iterations = it;
    double stat, feas, comp;
    kkt(ev, stat, feas, comp);
    if (stat <= opts.tol_stationarity && feas <= opts.tol_feasibility &&
        comp <= opts.tol_complementarity) {
      sol.status = NlpStatus::Optimal;
      break;
    }

    QpResult qp = solve_qp(B, ev.grad, ev.je, -ev.ce, ev.ji, -ev.ci);
    if (!qp.ok) {
      qp = solve_qp_elastic(B, ev.grad, ev.je, -ev.ce, ev.ji, -ev.ci,
                            opts.elastic_penalty);
      sol.elastic_used = true;
    }
    if (!qp.ok) {
      sol.status = NlpStatus::NumericalFailure;
      sol.diagnostic = "QP subproblem failed";
      break;
    }
    y = qp.y;
    z = qp.z.cwiseMax(0.0);

    const double mult_norm = std::max(
        me ? y.lpNorm<Eigen::Infinity>() : 0.0,
        mi ? z.lpNorm<Eigen::Infinity>() : 0.0);
    mu_merit = std::max(mu_merit, 1.1 * mult_norm);

    const double viol0 = violation_l1(ev);
    const double phi0 = ev.f + mu_merit * viol0;
    const double ddir = ev.grad.dot(qp.d) - mu_merit * viol0;

    // convergence on a vanishing step with restored feasibility
    if (qp.d.lpNorm<Eigen::Infinity>() <
            1e-14 * (1.0 + x.lpNorm<Eigen::Infinity>()) &&
        feas <= opts.tol_feasibility) {
      kkt(ev, sol.kkt_stationarity, sol.feasibility, sol.complementarity);
      sol.status = (stat <= 1e2 * opts.tol_stationarity) ? NlpStatus::Optimal
                                                         : NlpStatus::MaxIterations;
      sol.diagnostic = "step collapsed";
      break;
    }

    double alpha = 1.0;
    bool accepted = false;
    Evaluation ev_trial;
    Eigen::VectorXd x_trial;
    bool soc_tried = false;
    for (int ls = 0; ls < 35; ++ls) {
      x_trial = x + alpha * qp.d;
      ev_trial = evaluate(x_trial);
      const double phi_t = merit(ev_trial);
      if (phi_t <= phi0 + 1e-4 * alpha * std::min(ddir, 0.0) ||
          (ls == 0 && phi_t < phi0)) {
        accepted = true;
        break;
      }
      if (!soc_tried && ls == 0 && me > 0 &&
          violation_l1(ev_trial) > viol0) {
        // second-order correction against constraint curvature
        soc_tried = true;
        Eigen::MatrixXd JJt = ev.je * ev.je.transpose();
        JJt.diagonal().array() += 1e-12;
        Eigen::VectorXd corr =
            -ev.je.transpose() * JJt.ldlt().solve(ev_trial.ce);
        Eigen::VectorXd x_soc = x_trial + corr;
        Evaluation ev_soc = evaluate(x_soc);
        if (merit(ev_soc) <= phi0 + 1e-4 * std::min(ddir, 0.0)) {
          x_trial = x_soc;
          ev_trial = ev_soc;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
      if (alpha < 1e-13) break;
    }
    if (!accepted) {
      // a tiny step is still taken when the model disagrees; if even that
      // fails to move, report the stall
      double stat2, feas2, comp2;
      kkt(ev, stat2, feas2, comp2);
      sol.status = feas2 > 1e2 * opts.tol_feasibility ? NlpStatus::Infeasible
                                                      : NlpStatus::MaxIterations;
      std::ostringstream os;
      os << "line search stalled (merit " << phi0 << ", |d| "
         << qp.d.lpNorm<Eigen::Infinity>() << ", feas " << feas2 << ")";
      sol.diagnostic = os.str();
      break;
    }

    // damped BFGS on the Lagrangian
    Eigen::VectorXd grad_l_new = ev_trial.grad;
    if (me > 0) grad_l_new -= ev_trial.je.transpose() * y;
    if (mi > 0) grad_l_new -= ev_trial.ji.transpose() * z;
    Eigen::VectorXd grad_l_old = ev.grad;
    if (me > 0) grad_l_old -= ev.je.transpose() * y;
    if (mi > 0) grad_l_old -= ev.ji.transpose() * z;
    Eigen::VectorXd s = x_trial - x;
    Eigen::VectorXd yv = grad_l_new - grad_l_old;
    const double sBs = s.dot(B * s);
    const double sy = s.dot(yv);
    if (s.lpNorm<Eigen::Infinity>() > 0.0 && sBs > 0.0) {
      double theta = 1.0;
      if (sy < 0.2 * sBs) theta = 0.8 * sBs / (sBs - sy);
      Eigen::VectorXd r = theta * yv + (1.0 - theta) * (B * s);
      const double sr = s.dot(r);
      if (sr > 1e-12) {
        B -= (B * s) * (s.transpose() * B) / sBs;
        B += r * r.transpose() / sr;
      }
    }

    x = x_trial;
    ev = ev_trial;
  }

  if (sol.status != NlpStatus::Optimal && sol.iterations >= opts.max_iter - 1 &&
      sol.diagnostic.empty()) {
    sol.status = NlpStatus::MaxIterations;
    sol.diagnostic = "iteration limit";
  }

  kkt(ev, sol.kkt_stationarity, sol.feasibility, sol.complementarity);
  if (sol.status != NlpStatus::Optimal &&
      sol.kkt_stationarity <= opts.tol_stationarity &&
      sol.feasibility <= opts.tol_feasibility &&
      sol.complementarity <= opts.tol_complementarity) {
    sol.status = NlpStatus::Optimal;
  }

  sol.x = x;
  sol.eq_mult = y;
  const int nb = static_cast<int>(bound_rows.size());
  sol.ineq_mult = mg > 0 ? z.head(mg) : Eigen::VectorXd();
  sol.lower_mult = Eigen::VectorXd::Zero(n);
  sol.upper_mult = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < nb; ++r) {
    const auto [i, sgn] = bound_rows[r];
    if (sgn > 0)
      sol.lower_mult[i] = z[mg + r];
    else
      sol.upper_mult[i] = z[mg + r];
  }
  for (int i = 0; i < mg; ++i)
    if (ev.ci[i] <= 1e-6 || (i < sol.ineq_mult.size() && sol.ineq_mult[i] > 1e-7))
      sol.active_set.push_back(i);
  if (sol.status != NlpStatus::Optimal && sol.diagnostic.empty()) {
    std::ostringstream os;
    os << "not optimal: stationarity " << sol.kkt_stationarity << ", feasibility "
       << sol.feasibility;
    sol.diagnostic = os.str();
  }
  return sol;
}

}  // namespace gridflex
