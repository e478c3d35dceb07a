// Uniform Catmull-Rom splines: closed-loop boundary smoothing and open-path
// centerline smoothing for wires.
#pragma once

#include <stdexcept>
#include <vector>

#include "gentact/math.hpp"

namespace gentact {

struct TooFewPointsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Uniform Catmull-Rom segment between p1 and p2, t in [0,1].
inline Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2,
                        const Vec3& p3, double t) {
  double t2 = t * t, t3 = t2 * t;
  Vec3 a = p1 * 2.0;
  Vec3 b = p2 - p0;
  Vec3 c = p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3;
  Vec3 d = (p1 - p2) * 3.0 - p0 + p3;
  return (a + b * t + c * t2 + d * t3) * 0.5;
}

// Interpolating closed-loop spline through every control point, uniform
// parameterization. Output has loop.size() * samples_per_segment + 1 points;
// the last point repeats the first so the polyline is explicitly closed.
inline std::vector<Vec3> smooth_boundary(const std::vector<Vec3>& loop,
                                         int samples_per_segment) {
  if (loop.size() < 4)
    throw TooFewPointsError("smooth_boundary: need at least 4 control points");
  if (samples_per_segment < 1)
    throw std::invalid_argument("smooth_boundary: samples_per_segment must be >= 1");
  int n = static_cast<int>(loop.size());
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(n) * samples_per_segment + 1);
  for (int i = 0; i < n; ++i) {
    const Vec3& p0 = loop[(i + n - 1) % n];
    const Vec3& p1 = loop[i];
    const Vec3& p2 = loop[(i + 1) % n];
    const Vec3& p3 = loop[(i + 2) % n];
    for (int s = 0; s < samples_per_segment; ++s) {
      double t = static_cast<double>(s) / samples_per_segment;
      out.push_back(catmull_rom(p0, p1, p2, p3, t));
    }
  }
  out.push_back(out.front());
  return out;
}

// Interpolating open spline through every control point (clamped ends).
inline std::vector<Vec3> smooth_open_path(const std::vector<Vec3>& points,
                                          int samples_per_segment) {
  if (points.size() < 2)
    throw TooFewPointsError("smooth_open_path: need at least 2 points");
  if (points.size() == 2) {
    std::vector<Vec3> out;
    for (int s = 0; s <= samples_per_segment; ++s) {
      double t = static_cast<double>(s) / samples_per_segment;
      out.push_back(points[0] + (points[1] - points[0]) * t);
    }
    return out;
  }
  int n = static_cast<int>(points.size());
  std::vector<Vec3> out;
  for (int i = 0; i + 1 < n; ++i) {
    const Vec3& p0 = points[std::max(i - 1, 0)];
    const Vec3& p1 = points[i];
    const Vec3& p2 = points[i + 1];
    const Vec3& p3 = points[std::min(i + 2, n - 1)];
    int last = (i + 2 == n) ? samples_per_segment : samples_per_segment - 1;
    for (int s = 0; s <= last; ++s) {
      double t = static_cast<double>(s) / samples_per_segment;
      out.push_back(catmull_rom(p0, p1, p2, p3, t));
    }
  }
  return out;
}

inline double polyline_length(const std::vector<Vec3>& pts) {
  double len = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

// Arc length along the closed boundary spline up to each output sample.
inline std::vector<double> cumulative_arc_length(const std::vector<Vec3>& pts) {
  std::vector<double> acc(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i)
    acc[i] = acc[i - 1] + distance(pts[i - 1], pts[i]);
  return acc;
}

// Point at a given arc length along a polyline (clamped to its ends).
inline Vec3 point_at_arc_length(const std::vector<Vec3>& pts, double s) {
  if (pts.empty()) throw std::invalid_argument("point_at_arc_length: empty polyline");
  if (pts.size() == 1 || s <= 0.0) return pts.front();
  double acc = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) {
    double seg = distance(pts[i - 1], pts[i]);
    if (acc + seg >= s && seg > 0.0) {
      double t = (s - acc) / seg;
      return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
    }
    acc += seg;
  }
  return pts.back();
}

}  // namespace gentact
