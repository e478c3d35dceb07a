// Sensor nodule distribution: Poisson-disk sampling on a mesh surface,
// electrode placement inside the dermis, and per-sensor series resistance.
#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gentact/math.hpp"
#include "gentact/mesh.hpp"
#include "gentact/rng.hpp"

namespace gentact {

struct DepthExceedsThicknessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conductive disk embedded below the outer dermis surface. `center` is the
// center of the top (sensing) face; `local_pose` expresses the same pose in
// the kinematic link frame, z axis along `normal`.
struct Electrode {
  int id = 0;
  Vec3 center;
  Vec3 normal;
  double radius = 0.0;
  double depth = 0.0;
  double area = 0.0;
  std::string link_frame = "world";
  Mat4 local_pose;
};

struct SurfaceSample {
  Vec3 point;
  int face_id = 0;
};

// Dart-throwing Poisson-disk sampling with area-weighted face selection and
// Euclidean rejection distance. Stops after max_attempts consecutive
// rejections; every returned pair of points is >= r_min apart. Deterministic
// for a given seed.
inline std::vector<SurfaceSample> poisson_disk_sample(const SurfaceMesh& surface,
                                                      double r_min,
                                                      std::uint64_t seed,
                                                      int max_attempts = 10000) {
  if (r_min <= 0.0) throw std::invalid_argument("poisson_disk_sample: r_min must be > 0");
  if (surface.faces.empty())
    throw std::invalid_argument("poisson_disk_sample: empty surface");
  int nf = static_cast<int>(surface.faces.size());
  std::vector<double> cum(nf, 0.0);
  double acc = 0.0;
  for (int f = 0; f < nf; ++f) {
    acc += face_area(surface, f);
    cum[f] = acc;
  }
  if (acc <= 0.0) throw std::invalid_argument("poisson_disk_sample: zero-area surface");

  Rng rng(seed);
  std::vector<SurfaceSample> accepted;
  double r2 = r_min * r_min;
  int rejections = 0;
  while (rejections < max_attempts) {
    double pick = rng.uniform() * acc;
    int f = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    if (f >= nf) f = nf - 1;
    // uniform barycentric point
    double su = std::sqrt(rng.uniform());
    double v = rng.uniform();
    double b0 = 1.0 - su, b1 = su * (1.0 - v), b2 = su * v;
    const auto& t = surface.faces[f];
    Vec3 p = surface.vertices[t[0]] * b0 + surface.vertices[t[1]] * b1 +
             surface.vertices[t[2]] * b2;
    bool ok = true;
    for (const auto& s : accepted) {
      if (norm_squared(p - s.point) < r2) {
        ok = false;
        break;
      }
    }
    if (ok) {
      accepted.push_back({p, f});
      rejections = 0;
    } else {
      ++rejections;
    }
  }
  return accepted;
}

struct NodulePlacement {
  std::vector<Electrode> electrodes;
  bool tangency_capped = false;  // a min_radius clamp was reduced to avoid overlap
};

// Instantiates cylindrical electrodes at sampled points, radius scaled by the
// nearest-neighbor distance, top face inset `depth` below the outer surface.
// An isolated point (no neighbor) gets max_radius. Radii are additionally
// capped at half the nearest-neighbor distance so disks never overlap; the
// cap only engages when min_radius is set larger than that bound.
inline NodulePlacement place_nodules(const std::vector<SurfaceSample>& points,
                                     const DermisShell& dermis,
                                     double radius_scale, double depth,
                                     double min_radius, double max_radius,
                                     const std::string& link_frame = "world",
                                     const Mat4& link_transform = Mat4::identity()) {
  if (radius_scale <= 0.0 || radius_scale > 0.5)
    throw std::invalid_argument("place_nodules: radius_scale must be in (0, 0.5]");
  if (depth < 0.0) throw std::invalid_argument("place_nodules: depth must be >= 0");
  if (depth >= dermis.thickness)
    throw DepthExceedsThicknessError("place_nodules: depth exceeds dermis thickness");
  if (min_radius < 0.0 || max_radius < min_radius)
    throw std::invalid_argument("place_nodules: need 0 <= min_radius <= max_radius");

  const double pi = 3.14159265358979323846;
  NodulePlacement out;
  Mat4 to_link = link_transform.inverse_rigid();
  for (size_t i = 0; i < points.size(); ++i) {
    double nn = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < points.size(); ++j)
      if (j != i) nn = std::min(nn, distance(points[i].point, points[j].point));

    double radius;
    if (!std::isfinite(nn)) {
      radius = max_radius;  // nearest-neighbor rule undefined for a single point
    } else {
      radius = std::clamp(radius_scale * nn, min_radius, max_radius);
      if (radius > 0.5 * nn) {
        radius = 0.5 * nn;
        out.tangency_capped = true;
      }
    }

    Vec3 n = normalized(face_normal_scaled(dermis.outer, points[i].face_id));
    Electrode e;
    e.id = static_cast<int>(i);
    e.center = points[i].point - n * depth;
    e.normal = n;
    e.radius = radius;
    e.depth = depth;
    e.area = pi * radius * radius;
    e.link_frame = link_frame;
    e.local_pose = to_link * Mat4::frame_from_z(e.center, e.normal);
    out.electrodes.push_back(e);
  }
  return out;
}

// Total series resistance of one sensor channel: printed trace plus the set
// resistor between the measurement pins.
inline double wire_resistance(double wire_length_m, double resistance_per_meter,
                              double base_resistor_ohm) {
  if (wire_length_m < 0.0 || resistance_per_meter < 0.0 || base_resistor_ohm < 0.0)
    throw std::invalid_argument("wire_resistance: inputs must be >= 0");
  return wire_length_m * resistance_per_meter + base_resistor_ohm;
}

}  // namespace gentact
