#include "gridflex/capability.hpp"

#include <cmath>
#include <complex>

namespace gridflex {

double armature_limit_pu(const CapabilityParams& caps, double p_g_pu, double v_g_pu) {
  const double s = v_g_pu * caps.i_n_pu;
  const double head = s * s - p_g_pu * p_g_pu;
  if (head < 0.0)
    throw CapabilityError("active power exceeds armature capability, no reactive headroom");
  return std::sqrt(head);
}

double saturation_factor(const CapabilityParams& caps, double v_l) {
  return 1.0 / (1.0 + caps.m * std::pow(v_l, caps.n));
}

double airgap_flux(const CapabilityParams& caps, double p_g_pu, double q_g_pu,
                   double v_g_pu) {
  const std::complex<double> v(v_g_pu, 0.0);
  const std::complex<double> s(p_g_pu, -q_g_pu);
  const std::complex<double> vl = v + std::complex<double>(0.0, caps.x_l) * s / v_g_pu;
  return std::abs(vl);
}

double field_limit_frozen_pu(const CapabilityParams& caps, double p_g_pu, double v_g_pu,
                             double k_frozen) {
  const double e_qs = k_frozen * caps.e_lim;
  const double x_ds = caps.x_l + k_frozen * caps.x_ad;
  const double q_m = v_g_pu / x_ds * (e_qs - v_g_pu);
  const double p_n = caps.p_n_pu();
  const double s = v_g_pu * caps.i_n_pu;
  const double arm_at_pn = std::sqrt(std::max(s * s - p_n * p_n, 0.0));
  const double gamma = (q_m - arm_at_pn) / p_n;
  return q_m - gamma * p_g_pu;
}

SaturationState field_limit_fixed_point(const CapabilityParams& caps, double p_g_pu,
                                        double v_g_pu, double q_start_pu) {
  SaturationState st;
  st.q_g = q_start_pu;
  const double damping = 0.5;
  const double tol = 1e-10;
  const int max_iter = 50;
  for (int it = 1; it <= max_iter; ++it) {
    st.v_l = airgap_flux(caps, p_g_pu, st.q_g, v_g_pu);
    st.k = saturation_factor(caps, st.v_l);
    const double q_next = field_limit_frozen_pu(caps, p_g_pu, v_g_pu, st.k);
    const double q_new = st.q_g + damping * (q_next - st.q_g);
    st.iterations = it;
    if (std::abs(q_new - st.q_g) < tol) {
      st.q_g = q_new;
      return st;
    }
    st.q_g = q_new;
  }
  throw CapabilityError("saturation fixed point did not converge in 50 iterations");
}

double field_limit_pu(const CapabilityParams& caps, double p_g_pu, double v_g_pu,
                      double q_est_pu) {
  return field_limit_fixed_point(caps, p_g_pu, v_g_pu, q_est_pu).q_g;
}

}  // namespace gridflex
