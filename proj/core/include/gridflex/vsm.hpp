#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridflex/network.hpp"
#include "gridflex/nlp.hpp"
#include "gridflex/polygon.hpp"
#include "gridflex/powerflow.hpp"

namespace gridflex {

class VsmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AdnMode { Frozen, Flexible };

struct VsmSpec {
  AdnMode adn_mode = AdnMode::Frozen;
  std::optional<std::string> contingency;  // branch "from-to" to remove first
  NlpOptions nlp;
};

enum class GenLimitState { VoltageControlled, ArmatureLimited, FieldLimited, PLimited };

struct GenReport {
  int gen = -1;
  std::string bus;
  GenLimitState state = GenLimitState::VoltageControlled;
  double p_mw = 0.0;
  double q_mvar = 0.0;
  double v_pu = 0.0;
};

struct VsmSolution {
  double lambda_star = 0.0;
  double vsm_mw = 0.0;  // lambda_star * total d_p
  OperatingPoint point;
  std::vector<GenReport> gen_report;
  std::vector<AdnDelta> adn_adjustments;                // MW/Mvar per ADN
  std::vector<std::vector<int>> binding_fr_constraints; // active half planes per ADN
  int outer_iterations = 0;
  NlpSolution nlp;
};

const char* to_string(GenLimitState s);

/// Maximal-stress OPF: maximizes the total load increase along the case
/// stress direction subject to the long-term equilibrium equations, machine
/// capability limits and AVR setpoint ceilings. Active power limits are
/// enforced by the outer loop that freezes limited machines and
/// renormalizes the participation factors.
VsmSolution solve_vsm(const NetworkCase& net, const VsmSpec& spec = {});

/// Flexibility-constrained variant: ADN consumption changes enter as free
/// variables inside their polygons. Every flexible ADN must carry a polygon
/// whose deviation region strictly contains (0, 0).
VsmSolution solve_vsm_flex(const NetworkCase& net, const VsmSpec& spec = {});

/// Copy of the case with one branch out of service; throws VsmError when the
/// removal islands the network.
NetworkCase apply_contingency(const NetworkCase& net, const std::string& branch_id);

}  // namespace gridflex
