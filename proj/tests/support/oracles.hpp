#pragma once

// Independent reference implementations used only by the test suites. These
// deliberately avoid the library's rectangular formulation and assembly code
// so that agreement is meaningful.

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gridflex/network.hpp"
#include "gridflex/powerflow.hpp"

namespace gridflex::testing {

/// Polar-coordinate Newton power flow (classic slack/PV/PQ formulation with
/// numerically differenced Jacobian). Only supports cases whose single
/// participating source sits at the slack bus.
struct PolarSolution {
  bool converged = false;
  Eigen::VectorXd v_mag;
  Eigen::VectorXd v_ang;
  double slack_p_pu = 0.0;
};
PolarSolution solve_polar(const NetworkCase& net, double lambda = 0.0);

/// Central finite differences of the library residual w.r.t.
/// (e, f, delta_loss, lambda).
Eigen::MatrixXd fd_jacobian(const NetworkCase& net, const OperatingPoint& pt,
                            double h = 1e-6);

/// Dense sweep over the two control voltages of the 2-bus feeder. For each
/// (V_d, V_g) pair the branch angle is solved in closed form, the implied
/// converter reactive output is checked against the current limit, and the
/// reachable PCC deviation is recorded. Entirely independent of the NLP.
struct GridScan {
  std::vector<Eigen::Vector2d> cloud;  // feasible (dP, dQ), MW
  double p_j0_mw = 0.0;
  double q_j0_mvar = 0.0;
};
GridScan grid_scan_2bus(const NetworkCase& feeder, int n_vd = 161, int n_vg = 161);

/// Reachability probe: true when some feasible (V_d, V_g) pair lands within
/// tol_mw of the requested deviation.
bool grid_reachable_2bus(const GridScan& scan, double dp_mw, double dq_mvar,
                         double tol_mw);

/// Random connected transmission case with a single slack machine, a few PV
/// machines and constant-power loads; stress = proportional load growth.
NetworkCase random_case(std::mt19937& rng, int max_buses = 10);

}  // namespace gridflex::testing
