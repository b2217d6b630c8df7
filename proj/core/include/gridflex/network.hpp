#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridflex/capability.hpp"

namespace gridflex {

enum class BusKind { Slack, Generator, Load, AdnPcc, FeederInternal };

struct Bus {
  std::string id;
  BusKind kind = BusKind::Load;
  double v_min = 0.0;   // pu
  double v_max = 2.0;   // pu
  double base_kv = 0.0;
};

struct Branch {
  std::string from;
  std::string to;
  double r = 0.0;    // pu series resistance
  double x = 0.0;    // pu series reactance
  double b_c = 0.0;  // pu total shunt susceptance, split 50/50 to the ends
  bool in_service = true;
};

/// HV/MV transformer with a load tap changer regulating the MV-side voltage.
struct TransformerLtc {
  std::string hv_bus;
  std::string mv_bus;
  double x_t = 0.0;           // pu leakage reactance (lossless)
  double v_set = 1.0;         // regulated MV-side setpoint, pu
  double deadband_half = 0.01;
  double tap_min = 0.9;
  double tap_max = 1.1;
  double tap_step = 0.01;
  double delay_first_s = 30.0;  // mechanical delay before the first step
  double delay_step_s = 10.0;   // delay between subsequent steps
};

/// Voltage-sensitive load P = P0 (V/V0)^a, Q = Q0 (V/V0)^b. The exponents are
/// honored in feeder-scoped studies; transmission-scope loads are restored to
/// constant power.
struct ExpLoad {
  std::string bus;
  double p0_mw = 0.0;
  double q0_mvar = 0.0;
  double v0 = 1.0;
  double exp_p = 1.0;
  double exp_q = 2.0;
};

/// Converter-interfaced generator, optionally with storage behind the same
/// converter (then p_min < p_max, otherwise both equal the current dispatch).
struct IbgUnit {
  std::string bus;
  double s_nom_mva = 0.0;
  double i_n_pu = 0.0;  // converter current limit, pu on the case base
  double p0_mw = 0.0;
  double q0_mvar = 0.0;
  double p_min_mw = 0.0;
  double p_max_mw = 0.0;
  double v_set = 1.0;
};

struct SyncGen {
  std::string bus;
  double p0_mw = 0.0;
  double p_min_mw = 0.0;
  double p_max_mw = 0.0;
  double v_ref = 1.0;
  double w = 0.0;  // slack participation factor
  std::optional<CapabilityParams> caps;
};

struct NetworkCase;

struct PolygonData {
  // ordered counterclockwise, MW / Mvar deviations from the anchor
  std::vector<std::array<double, 2>> vertices;
};

/// Distribution feeder hanging off a transmission bus. The feeder itself is a
/// nested case whose slack bus is the PCC.
struct AdnAttachment {
  std::string pcc_bus;
  double p0_mw = 0.0;   // declared initial PCC consumption
  double q0_mvar = 0.0;
  std::shared_ptr<const NetworkCase> feeder;
  std::optional<PolygonData> polygon;
};

/// Per-bus stress direction: injections evolve as P = P0 + lambda*d_p.
struct StressDirection {
  std::map<std::string, double> d_p_mw;
  std::map<std::string, double> d_q_mvar;

  double total_dp_mw() const {
    double s = 0.0;
    for (const auto& [_, v] : d_p_mw) s += v;
    return s;
  }
  bool empty() const { return d_p_mw.empty() && d_q_mvar.empty(); }
};

/// Immutable per-unit grid description. Quantities are stored in MW/Mvar and
/// pu on base_mva; treat instances as read-only after load.
struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<TransformerLtc> transformers;
  std::vector<ExpLoad> loads;
  std::vector<IbgUnit> ibgs;
  std::vector<SyncGen> generators;
  std::vector<AdnAttachment> adns;
  StressDirection stress;

  int bus_index(const std::string& id) const {
    auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end())
      throw std::out_of_range("unknown bus id '" + id + "'");
    return it->second;
  }
  bool has_bus(const std::string& id) const {
    return bus_lookup_.count(id) > 0;
  }
  int n_buses() const { return static_cast<int>(buses.size()); }

  /// Index of the single slack bus; -1 if absent.
  int slack_bus() const {
    for (int i = 0; i < n_buses(); ++i)
      if (buses[i].kind == BusKind::Slack) return i;
    return -1;
  }

  /// A case is feeder-scoped when its slack bus is the HV side of an LTC:
  /// loads then follow their voltage exponents.
  bool is_feeder_scope() const {
    int s = slack_bus();
    if (s < 0) return false;
    for (const auto& t : transformers)
      if (t.hv_bus == buses[s].id) return true;
    return false;
  }

  double mw_to_pu(double mw) const { return mw / base_mva; }
  double pu_to_mw(double pu) const { return pu * base_mva; }

  void rebuild_index() {
    bus_lookup_.clear();
    for (int i = 0; i < n_buses(); ++i) bus_lookup_[buses[i].id] = i;
  }

 private:
  std::unordered_map<std::string, int> bus_lookup_;
};

inline const char* to_string(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::Generator: return "generator";
    case BusKind::Load: return "load";
    case BusKind::AdnPcc: return "adn-pcc";
    case BusKind::FeederInternal: return "feeder-internal";
  }
  return "?";
}

}  // namespace gridflex
