// Small vector/transform math and statistics helpers shared by all stages.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace gentact {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline double norm_squared(const Vec3& v) { return dot(v, v); }

inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  if (n <= 0.0) throw std::runtime_error("normalized: zero-length vector");
  return v / n;
}

// Minimum distance from point p to segment [a, b].
inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 ab = b - a;
  double len2 = norm_squared(ab);
  if (len2 <= 0.0) return distance(p, a);
  double t = dot(p - a, ab) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + ab * t);
}

// Row-major 4x4 homogeneous transform. Only rigid transforms are used here.
struct Mat4 {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Mat4 identity() { return Mat4{}; }

  static Mat4 translation(const Vec3& t) {
    Mat4 r;
    r.m[3] = t.x;
    r.m[7] = t.y;
    r.m[11] = t.z;
    return r;
  }

  // Rotation by angle (radians) about a unit axis, Rodrigues form.
  static Mat4 rotation(const Vec3& axis, double angle) {
    Vec3 u = normalized(axis);
    double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    Mat4 r;
    r.m[0] = c + u.x * u.x * t;
    r.m[1] = u.x * u.y * t - u.z * s;
    r.m[2] = u.x * u.z * t + u.y * s;
    r.m[4] = u.y * u.x * t + u.z * s;
    r.m[5] = c + u.y * u.y * t;
    r.m[6] = u.y * u.z * t - u.x * s;
    r.m[8] = u.z * u.x * t - u.y * s;
    r.m[9] = u.z * u.y * t + u.x * s;
    r.m[10] = c + u.z * u.z * t;
    return r;
  }

  // Frame with +z aligned to the given direction, positioned at origin.
  static Mat4 frame_from_z(const Vec3& origin, const Vec3& z_dir) {
    Vec3 z = normalized(z_dir);
    Vec3 ref = std::abs(z.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 x = normalized(cross(ref, z));
    Vec3 y = cross(z, x);
    Mat4 r;
    r.m[0] = x.x;
    r.m[4] = x.y;
    r.m[8] = x.z;
    r.m[1] = y.x;
    r.m[5] = y.y;
    r.m[9] = y.z;
    r.m[2] = z.x;
    r.m[6] = z.y;
    r.m[10] = z.z;
    r.m[3] = origin.x;
    r.m[7] = origin.y;
    r.m[11] = origin.z;
    return r;
  }

  Mat4 operator*(const Mat4& o) const {
    Mat4 r;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += m[i * 4 + k] * o.m[k * 4 + j];
        r.m[i * 4 + j] = s;
      }
    return r;
  }

  Vec3 transform_point(const Vec3& p) const {
    return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
  }

  Vec3 transform_vector(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[4] * v.x + m[5] * v.y + m[6] * v.z,
            m[8] * v.x + m[9] * v.y + m[10] * v.z};
  }

  Vec3 translation_part() const { return {m[3], m[7], m[11]}; }

  // Inverse assuming the matrix is rigid (orthonormal rotation + translation).
  Mat4 inverse_rigid() const {
    Mat4 r;
    r.m[0] = m[0];
    r.m[1] = m[4];
    r.m[2] = m[8];
    r.m[4] = m[1];
    r.m[5] = m[5];
    r.m[6] = m[9];
    r.m[8] = m[2];
    r.m[9] = m[6];
    r.m[10] = m[10];
    Vec3 t = translation_part();
    Vec3 it = r.transform_vector(-t);
    r.m[3] = it.x;
    r.m[7] = it.y;
    r.m[11] = it.z;
    return r;
  }
};

// ---- statistics ----

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::runtime_error("mean: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Population standard deviation.
inline double stddev_population(const std::vector<double>& xs) {
  double mu = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

// Sample standard deviation (n - 1 denominator).
inline double stddev_sample(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::runtime_error("stddev_sample: need >= 2 values");
  double mu = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::runtime_error("median: empty input");
  std::sort(xs.begin(), xs.end());
  size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline double pearson_correlation(const std::vector<double>& xs,
                                  const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::runtime_error("pearson_correlation: need matched series, n >= 2");
  double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double pearson_r = 0.0;
};

// Ordinary least squares of y on x.
inline LinearFit linear_fit(const std::vector<double>& xs,
                            const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::runtime_error("linear_fit: need matched series, n >= 2");
  double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx <= 0.0) throw std::runtime_error("linear_fit: degenerate x variance");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.pearson_r = pearson_correlation(xs, ys);
  return f;
}

}  // namespace gentact
