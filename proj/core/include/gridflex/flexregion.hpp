#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gridflex/network.hpp"
#include "gridflex/polygon.hpp"

namespace gridflex {

class FlexRegionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ScanSense { Max, Min };

/// One boundary point of the flexibility region found along a search ray.
struct ScanPoint {
  double theta_deg = 0.0;
  ScanSense sense = ScanSense::Max;
  double dp_mw = 0.0;
  double dq_mvar = 0.0;
  std::vector<std::string> binding;  // active constraint labels
};

/// Boundary point where two named operating limits bind simultaneously.
struct CornerPoint {
  char label = '?';  // A..F
  std::array<std::string, 2> binding;
  double dp_mw = 0.0;
  double dq_mvar = 0.0;
  bool feasible = false;
  bool coincident = false;  // duplicates another feasible corner
};

/// Maximizes the PCC deviation along (cos theta, sin theta): the ray enters
/// as the direction-vector equality (no tangent singularity at 90 degrees)
/// and the objective is the signed distance along the ray.
ScanPoint fr_boundary_point(const NetworkCase& feeder, double theta_deg,
                            ScanSense sense);

/// Enumerates the six classical binding pairs of the two-bus feeder (LTC bus
/// voltage, IBG bus voltage, converter reactive extremes) as square Newton
/// systems. Throws FlexRegionError unless the feeder is the 2-bus topology.
std::vector<CornerPoint> corner_points_2bus(const NetworkCase& feeder);

struct ScanOptions {
  double dtheta_deg = 3.0;
  int threads = 1;
  double max_failure_ratio = 0.2;
};

/// Boundary sweep over theta in [0, 180] with two senses per direction.
/// Failed directions are skipped; more than max_failure_ratio failures or
/// fewer than 3 distinct surviving points abort.
std::vector<ScanPoint> radial_scan(const NetworkCase& feeder, const ScanOptions& opts = {});

/// Reduced polygon from scan points (keeps the anchor from the feeder base
/// case). target_vertices defaults to the six-point approximation.
FlexPolygon polygon_from_scan(const NetworkCase& feeder,
                              const std::vector<ScanPoint>& points,
                              int target_vertices = 6);

/// Polygon through the feasible corner points (coincident ones merged).
FlexPolygon polygon_from_corners(const NetworkCase& feeder,
                                 const std::vector<CornerPoint>& corners);

/// PCC anchor of a feeder: the base-case solved flows, MW/Mvar.
std::pair<double, double> feeder_anchor_mw(const NetworkCase& feeder);

struct PolygonExportMeta {
  std::string method;        // "corners" or "scan"
  double dtheta_deg = 0.0;   // scan only
  std::string case_name;
  std::string timestamp;     // RFC3339; informational only
};

/// JSON export: vertices, half planes, anchor and metadata.
std::string polygon_to_json(const FlexPolygon& poly, const PolygonExportMeta& meta);
/// CSV export of the vertex ring.
std::string polygon_to_csv(const FlexPolygon& poly);
/// Parses the JSON form back (vertices + anchor).
FlexPolygon polygon_from_json(const std::string& text);

}  // namespace gridflex
