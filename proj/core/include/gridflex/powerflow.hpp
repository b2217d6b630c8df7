#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflex/network.hpp"

namespace gridflex {

/// Rectangular-coordinate system state: V_k = e_k + j f_k, plus the loss
/// slack variable and the stress level.
struct OperatingPoint {
  Eigen::VectorXd e;
  Eigen::VectorXd f;
  double delta_loss = 0.0;  // pu
  double lambda = 0.0;

  int n() const { return static_cast<int>(e.size()); }
  double v_mag(int k) const { return std::hypot(e[k], f[k]); }
  double v_mag2(int k) const { return e[k] * e[k] + f[k] * f[k]; }
};

/// Requested PCC consumption change of one attached ADN.
struct AdnDelta {
  double dp_mw = 0.0;
  double dq_mvar = 0.0;
};

class PfError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Equation assembly over an immutable case. Three flavors share the same
/// residual/Jacobian machinery:
///  - Transmission: slack + PV generators with distributed loss slack,
///    constant-power loads, ADNs as constant PQ boundary injections.
///  - FeederBoundary: LTC MV bus held at its setpoint and acting as the
///    boundary source; the PCC bus is pinned at 1 pu and the transformer is
///    handled through the leakage-reactance correction of the PCC flows.
///  - FeederExplicit: PCC is the slack at 1 pu, the transformer enters the
///    admittance matrix with a discrete tap ratio (quasi-steady-state view).
class PfModel {
 public:
  enum class Mode { Auto, Transmission, FeederBoundary, FeederExplicit };

  struct Options {
    Mode mode = Mode::Auto;
    std::vector<AdnDelta> adn_delta;   // per case.adns entry; empty = frozen
    // FeederExplicit: tap ratio per transformer (MV boost), defaults to 1.0
    std::vector<double> tap;
    // IBG terminal-voltage setpoints; ibgs listed in ibg_pv are held at the
    // setpoint, others inject their fixed (P, Q)
    std::vector<int> ibg_pv;
    std::vector<double> ibg_vset;
    // per-IBG reactive override in Mvar (converter clipped at its current
    // limit); NaN = use the case value
    std::vector<double> ibg_qfix_mvar;
    // FeederBoundary: override for the regulated MV-side voltage
    std::optional<double> root_v;
    // generators forced onto their reactive limit (continuation switching)
    std::vector<int> gen_qlim;
    // per-generator frozen active power for limited machines (NaN = free)
    std::vector<double> gen_pfix;
    // effective participation factors; empty = renormalized case values
    std::vector<double> gen_w;
  };

  explicit PfModel(const NetworkCase& net) : PfModel(net, Options{}) {}
  PfModel(const NetworkCase& net, Options opt);

  int n_bus() const { return n_; }
  int n_equations() const { return 2 * n_ + 1; }
  Mode mode() const { return mode_; }

  /// Mismatch vector: N active rows, N reactive/voltage rows, angle row.
  Eigen::VectorXd residual(const OperatingPoint& pt) const;

  /// Analytic partials of the residual w.r.t. (e, f, delta_loss, lambda);
  /// (2N+1) x (2N+2), exact for the assembled equations.
  Eigen::MatrixXd jacobian(const OperatingPoint& pt) const;

  OperatingPoint start_point() const;

  /// Damped Newton iteration on the assembled equations.
  struct SolveStats {
    bool converged = false;
    int iterations = 0;
    double mismatch = 0.0;
  };
  SolveStats solve(OperatingPoint& pt, double tol = 1e-8, int max_iter = 50) const;

  /// Net active/reactive power flowing out of bus k into the network, pu.
  double p_net(const OperatingPoint& pt, int k) const;
  double q_net(const OperatingPoint& pt, int k) const;

  /// Reactive output of each generator recovered from the bus balance, pu.
  Eigen::VectorXd recover_gen_q(const OperatingPoint& pt) const;
  Eigen::VectorXd recover_ibg_q(const OperatingPoint& pt) const;

  /// Consumption of each attached ADN boundary at the current stress, pu.
  double adn_p_pu(int adn_idx, double lambda) const;
  double adn_q_pu(int adn_idx, double lambda) const;

  /// Active power produced by generator g at (delta_loss, lambda), pu.
  double gen_p_pu(int g, const OperatingPoint& pt) const;

  /// Feeder boundary exchange, pu: (p_t, q_t) drawn at the MV side and
  /// (p_j, q_j) seen at the HV side including the reactive loss on the
  /// transformer leakage reactance.
  struct BoundaryFlows {
    double p_t = 0.0, q_t = 0.0, p_j = 0.0, q_j = 0.0;
  };
  BoundaryFlows boundary_flows(const OperatingPoint& pt) const;

  const NetworkCase& net() const { return net_; }
  double total_dp_pu() const { return sum_dp_; }  // total active stress, pu
  int root_bus() const { return root_; }
  int slack_bus() const { return slack_; }

 private:
  void build_ybus();
  void assign_roles();

  const NetworkCase& net_;
  Options opt_;
  Mode mode_;
  int n_ = 0;
  int slack_ = -1;  // bus providing the angle reference row
  int root_ = -1;   // FeederBoundary: LTC MV bus; else == slack_
  int pinned_ = -1; // FeederBoundary: PCC bus pinned at 1 pu
  Eigen::MatrixXd gmat_, bmat_;  // dense Ybus, desk scale

  enum class QvRole { VMag, QBalance };
  struct VoltLoad {  // exponential load, stored as positive consumption
    double p0_pu, q0_pu, v0, a, b, dp_pu, dq_pu;
  };
  struct BusAgg {
    QvRole role = QvRole::QBalance;
    double v_target = 1.0;
    double p_const_pu = 0.0;  // fixed injections (+gen/ibg, -load)
    double q_const_pu = 0.0;
    double dp_dlambda = 0.0;  // stress derivative of the injection
    double dq_dlambda = 0.0;
    double dl_weight = 0.0;   // coefficient of delta_loss in the P row
    std::vector<VoltLoad> vloads;
    std::vector<int> qlim_gens;  // generators riding their reactive limit
  };
  std::vector<BusAgg> bus_;
  std::vector<double> eff_w_;     // effective participation factors
  std::vector<double> gen_pfix_;  // NaN = participating
  double sum_dp_ = 0.0;           // total active stress, pu
  double x_t_boundary_ = 0.0;     // FeederBoundary: leakage of the root LTC

  double qlim_q_pu(int g, double v, const OperatingPoint& pt, double* dq_dv) const;
};

/// Long-term equilibrium mismatch of a case at a point (spec form: active
/// rows, reactive/voltage rows, slack-angle row).
Eigen::VectorXd residual(const NetworkCase& net, const OperatingPoint& pt,
                         std::span<const AdnDelta> adn = {});

/// Analytic Jacobian of the above w.r.t. (e, f, delta_loss, lambda).
Eigen::MatrixXd jacobian(const NetworkCase& net, const OperatingPoint& pt,
                         std::span<const AdnDelta> adn = {});

struct PfResult {
  OperatingPoint point;
  int iterations = 0;
  double mismatch = 0.0;
  Eigen::VectorXd gen_q_pu;
  Eigen::VectorXd ibg_q_pu;
  double boundary_p_mw = 0.0;   // feeder cases: PCC consumption
  double boundary_q_mvar = 0.0;
};

/// Newton power-flow solve with the stress level and ADN adjustments held
/// fixed. Throws PfError on non-convergence (proximity to the loadability
/// limit or a bad start).
PfResult solve_powerflow(const NetworkCase& net, std::optional<OperatingPoint> start,
                         double lambda = 0.0, std::span<const AdnDelta> adn = {});

/// Injection set after applying the stress direction at level lambda.
struct StressedInjections {
  std::vector<double> p_mw;  // per bus: consumption (+) after stress
  std::vector<double> q_mvar;
};
StressedInjections apply_stress(const NetworkCase& net, const StressDirection& dir,
                                double lambda);

/// Distributed-slack generation shift dP_gk = w_k (dL + dP) over the
/// participating (unlimited) machines. `limited` marks machines excluded
/// from participation; their entry is zero and the remaining factors are
/// renormalized. Throws PfError when no capacity remains.
std::vector<double> generation_shift(const NetworkCase& net, double dp_mw, double dl_mw,
                                     std::span<const int> limited = {});

}  // namespace gridflex
