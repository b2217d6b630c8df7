#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gridflex {

class PolygonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Edge of the flexibility polygon in half-plane form
/// alpha*dP + beta*dQ + 1 >= 0 (dP, dQ in MW/Mvar around the anchor).
struct HalfPlane {
  double alpha = 0.0;
  double beta = 0.0;
};

/// Line through two vertices in the +1 normalization. Throws PolygonError
/// when the segment passes through the origin (the region would not contain
/// its anchor strictly).
HalfPlane half_plane_coeffs(const Eigen::Vector2d& v, const Eigen::Vector2d& v_next);

/// Convex flexibility region around an operating anchor: counterclockwise
/// vertex ring in (dP, dQ) space with one half plane per edge. (0,0) is
/// strictly interior by construction.
class FlexPolygon {
 public:
  /// Builds from an already-convex counterclockwise ring (reversed if given
  /// clockwise). Validates convexity and the interior origin.
  static FlexPolygon from_vertices(std::vector<Eigen::Vector2d> ring,
                                   const Eigen::Vector2d& anchor_mw = {0.0, 0.0});

  /// Convex hull of a point cloud (collinear/interior points dropped).
  static FlexPolygon from_point_cloud(const std::vector<Eigen::Vector2d>& pts,
                                      const Eigen::Vector2d& anchor_mw = {0.0, 0.0});

  int size() const { return static_cast<int>(vertices_.size()); }
  const std::vector<Eigen::Vector2d>& vertices() const { return vertices_; }
  const std::vector<HalfPlane>& half_planes() const { return half_planes_; }
  const Eigen::Vector2d& anchor() const { return anchor_; }

  /// All half planes >= -1e-9: boundary counts as inside.
  bool contains(double dp_mw, double dq_mvar) const;

  /// Smallest half-plane value at a point (negative outside).
  double margin(double dp_mw, double dq_mvar) const;

  double diameter() const;
  double area() const;

  /// Euclidean distance from a point to the region (0 when inside).
  double distance(const Eigen::Vector2d& p) const;

 private:
  std::vector<Eigen::Vector2d> vertices_;
  std::vector<HalfPlane> half_planes_;
  Eigen::Vector2d anchor_{0.0, 0.0};
};

/// Boundary-point reduction: seeds a triangle from the dQ extremes and the
/// dP minimum, then repeatedly adds the exterior point farthest from its
/// edge until the target vertex count is reached or nothing lies outside.
/// The result is an inner approximation whose vertices are input points.
FlexPolygon reduce_polygon(const std::vector<Eigen::Vector2d>& points,
                           int target_vertices,
                           const Eigen::Vector2d& anchor_mw = {0.0, 0.0});

/// Symmetric Hausdorff distance between two convex regions.
double hausdorff_distance(const FlexPolygon& a, const FlexPolygon& b);

/// Exact convex hull area of a point cloud (shoelace over the hull).
double convex_hull_area(const std::vector<Eigen::Vector2d>& pts);

}  // namespace gridflex
