#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridflex/network.hpp"
#include "gridflex/powerflow.hpp"

namespace gridflex {

struct ContinuationOptions {
  double initial_step = 0.1;   // first stress increment
  double rel_tol = 1e-5;       // stop when the step falls below rel_tol*max(1,|lambda|)
  bool enforce_gen_limits = true;
  std::vector<AdnDelta> adn_delta;
  int trace_bus = -1;          // bus whose voltage is recorded along the curve
  int max_steps = 4000;
};

struct CurveSample {
  double lambda;
  double stressed_load_mw;  // total consumption of the stressed buses
  double v_trace;           // voltage of the trace bus (or the stressed bus)
};

struct ContinuationResult {
  double lambda_max = 0.0;
  double vsm_mw = 0.0;  // lambda_max * total d_p
  std::vector<CurveSample> curve;
  OperatingPoint last_point;
  std::vector<int> q_limited_gens;  // machines that hit a reactive limit
};

/// Ramps the stress level with adaptive step halving until the power flow
/// stops converging: a PV-curve sweep to the loadability nose. Generator
/// reactive limits (armature/saturated field) switch machines from voltage
/// control to limited operation along the way when enforce_gen_limits is set.
ContinuationResult continuation_margin(const NetworkCase& net,
                                       const ContinuationOptions& opts = {});

/// True when the case still has a long-term equilibrium at the given stress
/// level (used as the outward infeasibility probe at candidate margins).
bool stress_feasible(const NetworkCase& net, double lambda,
                     const ContinuationOptions& opts = {});

}  // namespace gridflex
