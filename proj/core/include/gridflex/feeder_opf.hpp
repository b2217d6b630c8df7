#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gridflex/network.hpp"
#include "gridflex/nlp.hpp"
#include "gridflex/powerflow.hpp"

namespace gridflex {

/// Shared constraint assembly for feeder-side optimization: power balance of
/// every feeder bus with voltage-sensitive loads, the MV bus as a free
/// decision voltage, dispatchable IBG injections inside their converter
/// current circles, and the PCC deviation variables (dP, dQ) tied to the
/// boundary flows through the transformer leakage reactance.
///
/// Decision vector: [e(n), f(n), pg(ni), qg(ni), p_t, q_t, dP, dQ], pu.
class FeederOpf {
 public:
  explicit FeederOpf(const NetworkCase& feeder);

  int n_vars() const;
  int n_bus() const;
  int n_ibg() const;

  int idx_e(int bus) const;
  int idx_f(int bus) const;
  int idx_pg(int ibg) const;
  int idx_qg(int ibg) const;
  int idx_pt() const;
  int idx_qt() const;
  int idx_dp() const;
  int idx_dq() const;

  /// Base-case anchor: solved PCC flows with the LTC at its setpoint and the
  /// IBGs at their current dispatch, MW/Mvar.
  double anchor_p_mw() const;
  double anchor_q_mvar() const;

  /// Adds the search-ray equality cos(theta)*dQ - sin(theta)*dP = 0.
  void set_ray(double cos_theta, double sin_theta);

  /// Copy with the ray equality attached; the base solve is not repeated.
  FeederOpf with_ray(double cos_theta, double sin_theta) const;

  /// Constraint set (objective left to the caller); callbacks stay valid for
  /// the life of this object.
  NlpProblem constraints() const;

  /// Start vector at the solved base case (dP = dQ = 0).
  Eigen::VectorXd start() const;

  /// Human-readable label of general inequality row i ("Vmax@bus" etc.).
  std::string ineq_label(int i) const;
  int n_ineq() const;

  /// PCC consumption of a solution vector, MW/Mvar.
  std::pair<double, double> pcc_flows_mw(const Eigen::VectorXd& x) const;

  const NetworkCase& feeder() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Boundary flows implied by a solved feeder state (used by the corner-point
/// path that bypasses the NLP), pu.
PfModel::BoundaryFlows boundary_from_state(const NetworkCase& feeder,
                                           const OperatingPoint& pt);

/// Feeder-side admittance matrix: branches plus any internal transformers,
/// excluding the boundary LTC.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> feeder_ybus(const NetworkCase& net);

}  // namespace gridflex
