// Shared fixtures and independent oracles for the test suites.
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "gentact/math.hpp"
#include "gentact/mesh.hpp"

namespace testutil {

// Regular grid patch in the z=0 plane, (nx+1)*(ny+1) vertices, all weights 1.
inline gentact::SurfaceMesh make_grid_patch(int nx, int ny, double dx, double dy) {
  gentact::SurfaceMesh m;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.push_back({i * dx, j * dy, 0.0});
  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      m.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  m.weights.assign(m.vertices.size(), 1.0);
  return m;
}

// Triangulated convex spherical patch (most of an octant, open at the pole so
// there are no duplicated vertices), outward winding.
inline gentact::SurfaceMesh make_sphere_octant(double radius, int n = 8) {
  gentact::SurfaceMesh m;
  const double half_pi = 1.57079632679489661923;
  for (int j = 0; j <= n; ++j) {
    double phi = 0.8 * half_pi * j / n;  // elevation from equator
    for (int i = 0; i <= n; ++i) {
      double theta = half_pi * i / n;
      m.vertices.push_back({radius * std::cos(phi) * std::cos(theta),
                            radius * std::cos(phi) * std::sin(theta),
                            radius * std::sin(phi)});
    }
  }
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      m.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  m.weights.assign(m.vertices.size(), 1.0);
  gentact::drop_degenerate_faces(m);
  return m;
}

// Brute-force O(n^2) oracle: every pairwise distance >= r_min.
inline bool all_pairs_at_least(const std::vector<gentact::Vec3>& pts, double r_min) {
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      if (gentact::distance(pts[i], pts[j]) < r_min * (1.0 - 1e-12)) return false;
  return true;
}

}  // namespace testutil
