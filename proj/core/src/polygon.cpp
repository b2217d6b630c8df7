#include "gridflex/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridflex {

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

// Andrew monotone chain, counterclockwise, strictly convex output.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                          return (a - b).lpNorm<Eigen::Infinity>() < 1e-12;
                        }),
            pts.end());
  const int n = static_cast<int>(pts.size());
  if (n < 3) return pts;
  std::vector<Eigen::Vector2d> h(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross2(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 1e-14) --k;
    h[k++] = pts[i];
  }
  const int lower = k + 1;
  for (int i = n - 2; i >= 0; --i) {
    while (k >= lower && cross2(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 1e-14) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-30) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

HalfPlane half_plane_coeffs(const Eigen::Vector2d& v, const Eigen::Vector2d& v_next) {
  const double det = v.x() * v_next.y() - v_next.x() * v.y();
  if (std::abs(det) < 1e-14)
    throw PolygonError("polygon edge passes through the origin");
  return {(v.y() - v_next.y()) / det, (v_next.x() - v.x()) / det};
}

FlexPolygon FlexPolygon::from_vertices(std::vector<Eigen::Vector2d> ring,
                                       const Eigen::Vector2d& anchor_mw) {
  if (ring.size() < 3) throw PolygonError("polygon needs at least 3 vertices");
  double area2 = 0.0;
  for (size_t i = 0; i < ring.size(); ++i)
    area2 += cross2(ring[i], ring[(i + 1) % ring.size()]);
  if (area2 < 0.0) std::reverse(ring.begin(), ring.end());

  FlexPolygon poly;
  poly.anchor_ = anchor_mw;
  const int n = static_cast<int>(ring.size());
  for (int i = 0; i < n; ++i) {
    const auto& a = ring[i];
    const auto& b = ring[(i + 1) % n];
    const auto& c = ring[(i + 2) % n];
    if (cross2(b - a, c - b) < -1e-9 * std::max(1.0, (b - a).norm() * (c - b).norm()))
      throw PolygonError("vertex ring is not convex");
    // origin strictly interior <=> every edge determinant is positive in CCW order
    if (cross2(a, b) <= 1e-14)
      throw PolygonError("origin is not strictly interior to the polygon");
  }
  poly.vertices_ = std::move(ring);
  for (int i = 0; i < n; ++i)
    poly.half_planes_.push_back(
        half_plane_coeffs(poly.vertices_[i], poly.vertices_[(i + 1) % n]));
  return poly;
}

FlexPolygon FlexPolygon::from_point_cloud(const std::vector<Eigen::Vector2d>& pts,
                                          const Eigen::Vector2d& anchor_mw) {
  auto hull = convex_hull(pts);
  if (hull.size() < 3) throw PolygonError("point cloud is degenerate (collinear)");
  return from_vertices(std::move(hull), anchor_mw);
}

bool FlexPolygon::contains(double dp_mw, double dq_mvar) const {
  return margin(dp_mw, dq_mvar) >= -1e-9;
}

double FlexPolygon::margin(double dp_mw, double dq_mvar) const {
  double worst = std::numeric_limits<double>::max();
  for (const auto& hp : half_planes_)
    worst = std::min(worst, hp.alpha * dp_mw + hp.beta * dq_mvar + 1.0);
  return worst;
}

double FlexPolygon::diameter() const {
  double d = 0.0;
  for (size_t i = 0; i < vertices_.size(); ++i)
    for (size_t j = i + 1; j < vertices_.size(); ++j)
      d = std::max(d, (vertices_[i] - vertices_[j]).norm());
  return d;
}

double FlexPolygon::area() const {
  double a2 = 0.0;
  for (size_t i = 0; i < vertices_.size(); ++i)
    a2 += cross2(vertices_[i], vertices_[(i + 1) % vertices_.size()]);
  return 0.5 * a2;
}

double FlexPolygon::distance(const Eigen::Vector2d& p) const {
  if (contains(p.x(), p.y())) return 0.0;
  double d = std::numeric_limits<double>::max();
  const int n = size();
  for (int i = 0; i < n; ++i)
    d = std::min(d, segment_distance(p, vertices_[i], vertices_[(i + 1) % n]));
  return d;
}

FlexPolygon reduce_polygon(const std::vector<Eigen::Vector2d>& points,
                           int target_vertices, const Eigen::Vector2d& anchor_mw) {
  if (points.size() < 3)
    throw PolygonError("need at least 3 boundary points");

  int i_qmin = 0, i_qmax = 0, i_pmin = 0;
  for (int i = 1; i < static_cast<int>(points.size()); ++i) {
    if (points[i].y() < points[i_qmin].y()) i_qmin = i;
    if (points[i].y() > points[i_qmax].y()) i_qmax = i;
    if (points[i].x() < points[i_pmin].x()) i_pmin = i;
  }
  std::vector<Eigen::Vector2d> ring = {points[i_qmin], points[i_qmax], points[i_pmin]};
  {
    const double a2 = cross2(ring[1] - ring[0], ring[2] - ring[0]);
    if (std::abs(a2) < 1e-12)
      throw PolygonError("seed points are collinear");
    if (a2 < 0.0) std::swap(ring[1], ring[2]);
    // the anchor (origin of the deviation plane) must sit inside the seed triangle
    for (int i = 0; i < 3; ++i)
      if (cross2(ring[i], ring[(i + 1) % 3]) <= 0.0)
        throw PolygonError("origin lies outside the seed triangle");
  }

  while (static_cast<int>(ring.size()) < target_vertices) {
    // one exterior candidate per edge, keep the farthest overall
    int best_edge = -1, best_point = -1;
    double best_dist = 0.0;
    const int n = static_cast<int>(ring.size());
    for (int i = 0; i < n; ++i) {
      const HalfPlane hp = half_plane_coeffs(ring[i], ring[(i + 1) % n]);
      const double denom = hp.alpha * hp.alpha + hp.beta * hp.beta;
      for (int p = 0; p < static_cast<int>(points.size()); ++p) {
        const double val = hp.alpha * points[p].x() + hp.beta * points[p].y() + 1.0;
        if (val >= -1e-12) continue;  // inside or on this edge
        const double dist = std::abs(val) / denom;
        if (dist > best_dist) {
          best_dist = dist;
          best_edge = i;
          best_point = p;
        }
      }
    }
    if (best_edge < 0) break;  // nothing outside: the ring already covers the cloud
    ring.insert(ring.begin() + best_edge + 1, points[best_point]);
  }

  return FlexPolygon::from_vertices(std::move(ring), anchor_mw);
}

double hausdorff_distance(const FlexPolygon& a, const FlexPolygon& b) {
  double d = 0.0;
  for (const auto& v : a.vertices()) d = std::max(d, b.distance(v));
  for (const auto& v : b.vertices()) d = std::max(d, a.distance(v));
  return d;
}

double convex_hull_area(const std::vector<Eigen::Vector2d>& pts) {
  auto hull = convex_hull(pts);
  if (hull.size() < 3) return 0.0;
  double a2 = 0.0;
  for (size_t i = 0; i < hull.size(); ++i)
    a2 += cross2(hull[i], hull[(i + 1) % hull.size()]);
  return 0.5 * a2;
}

}  // namespace gridflex
