#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridflex/network.hpp"

namespace gridflex {

/// New LTC regulation target applied at t = 0 of the schedule.
struct LtcCommand {
  double v_set = 1.0;
  double deadband_half = 0.01;
};

/// Terminal-voltage ramp of one IBG; rate per §control convention 1 s ticks.
struct IbgRamp {
  int ibg = 0;
  double v_target = 1.0;
  double rate_pu_s = 0.0005;
};

/// LTC retarget first, IBG ramps start after the first tap movement (or
/// immediately when no tap action is pending).
struct ControlSchedule {
  std::optional<LtcCommand> ltc;
  std::vector<IbgRamp> ramps;
};

ControlSchedule load_schedule(const std::filesystem::path& path);
ControlSchedule parse_schedule(const std::string& json_text);

struct QssSample {
  double t_s = 0.0;
  int tap = 0;
  double v_d = 0.0;
  std::vector<double> ibg_v;
  std::vector<double> ibg_p_mw;
  std::vector<double> ibg_q_mvar;
  double p_j_mw = 0.0;
  double q_j_mvar = 0.0;
};

struct QssTrace {
  std::vector<QssSample> samples;
  bool tap_exhausted = false;
  bool diverged = false;
  bool quiescent = false;  // finished before the horizon
  std::string note;
};

/// Quasi-steady-state feeder run at 1 s resolution: each tick re-solves the
/// power flow with the current discrete tap and ramped IBG setpoints
/// (converter reactive output clipped at the current limit). Ends at the
/// horizon or at quiescence. Divergence returns the trace up to the last
/// good state with the flag set.
QssTrace qss_simulate(const NetworkCase& feeder, const ControlSchedule& sched,
                      double horizon_s);

/// Demand reduction obtained through voltage reduction of a voltage-sensitive
/// load: (P0/V_d^a) (V_min^a - V_fin^a), MW.
double indirect_shed(double p_k0_mw, double v_d, double v_min, double v_fin, double a);

std::string trace_to_csv(const NetworkCase& feeder, const QssTrace& trace);

}  // namespace gridflex
