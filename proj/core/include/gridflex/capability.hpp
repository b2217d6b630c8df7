#pragma once

#include <stdexcept>

namespace gridflex {

/// Synchronous machine limit data. Reactive limits are expressed through the
/// armature current limit and a linearized saturated field-current limit.
struct CapabilityParams {
  double s_n_mva = 0.0;  // machine rating
  double v_n = 1.0;      // nominal voltage, pu
  double i_n_pu = 0.0;   // stator current limit = S_N / V_N, pu on case base
  double e_lim = 0.0;    // field-current emf limit, pu
  double x_l = 0.0;      // leakage reactance, pu
  double x_ad = 0.0;     // d-axis mutual reactance, pu
  double m = 0.0;        // saturation coefficient
  double n = 0.0;        // saturation exponent
  double p_n_mw = 0.0;   // rated active power
  double base_mva = 100.0;  // case power base, set by the loader

  double i_n() const { return i_n_pu; }
  double p_n_pu() const { return p_n_mw / base_mva; }
  double s_n_pu() const { return s_n_mva / base_mva; }
};

struct SaturationState {
  double k = 1.0;     // saturation factor
  double v_l = 1.0;   // air-gap flux magnitude, pu
  double q_g = 0.0;   // reactive output at the fixed point, pu
  int iterations = 0;
};

/// Reactive headroom under the armature current limit:
/// q_a = sqrt((V_g I_N)^2 - P_g^2). Inputs and result in pu on the case base.
/// Throws when |P_g| exceeds V_g I_N (no headroom left).
double armature_limit_pu(const CapabilityParams& caps, double p_g_pu, double v_g_pu);

/// Saturation factor K = 1 / (1 + m V_l^n) for a given air-gap flux.
double saturation_factor(const CapabilityParams& caps, double v_l);

/// Air-gap flux magnitude |V_g + j X_l (P_g - j Q_g) / V_g|.
double airgap_flux(const CapabilityParams& caps, double p_g_pu, double q_g_pu, double v_g_pu);

/// Linearized saturated field-current limit q_r(P_g, V_g) = Q_m - gamma P_g for
/// a frozen saturation factor K. Matches the armature limit exactly at P_g = P_N.
double field_limit_frozen_pu(const CapabilityParams& caps, double p_g_pu, double v_g_pu,
                             double k_frozen);

/// Solves the scalar fixed point Q = q_r(P_g, V_g; K(V_l(Q))) by damped
/// iteration and returns the converged saturation state. The circular
/// dependency (V_l needs Q, Q is being limited) is closed here.
SaturationState field_limit_fixed_point(const CapabilityParams& caps, double p_g_pu,
                                        double v_g_pu, double q_start_pu = 0.0);

/// Field-current reactive limit at the converged saturation state, pu.
double field_limit_pu(const CapabilityParams& caps, double p_g_pu, double v_g_pu,
                      double q_est_pu = 0.0);

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gridflex
