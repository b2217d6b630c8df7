#pragma once

#include <string>
#include <vector>

#include "gridflex/network.hpp"
#include "gridflex/nlp.hpp"

namespace gridflex {

/// Target PCC consumption: P_ref = P_j0 + dP, Q_ref = Q_j0 + dQ. May lie
/// outside the feasible region; tracking then stops on the boundary.
struct SetpointCommand {
  double p_ref_mw = 0.0;
  double q_ref_mvar = 0.0;
};

struct TrackResult {
  double achieved_p_mw = 0.0;
  double achieved_q_mvar = 0.0;
  double distance_mva = 0.0;  // Euclidean gap to the command
  double v_d = 0.0;           // regulated MV voltage at the optimum
  std::vector<double> ibg_v;  // per-IBG terminal voltage
  std::vector<double> ibg_p_mw;
  std::vector<double> ibg_q_mvar;
  NlpSolution nlp;
};

/// Minimizes the Euclidean distance between the commanded and the actual PCC
/// flows over the feeder controls (regulated MV voltage, IBG dispatch within
/// converter limits), subject to the feeder operating constraints.
TrackResult track_setpoint(const NetworkCase& feeder, const SetpointCommand& cmd,
                           const NlpOptions& opts = {});

}  // namespace gridflex
