#pragma once

#include <array>
#include <cmath>

namespace spi {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3 matrix; only what rotation handling needs.
struct Mat3 {
  std::array<double, 9> m{};

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
};

// Unit quaternion (w, x, y, z) representing a 3D rotation.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quat conj() const { return {w, -x, -y, -z}; }

  // Hamilton product; (a*b) rotates first by b, then by a.
  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  // Canonical representative of the antipodal pair {q, -q}.
  Quat canonical() const {
    if (w > 0.0) return *this;
    if (w < 0.0) return {-w, -x, -y, -z};
    if (x > 0.0) return *this;
    if (x < 0.0) return {-w, -x, -y, -z};
    if (y > 0.0) return *this;
    if (y < 0.0) return {-w, -x, -y, -z};
    if (z >= 0.0) return *this;
    return {-w, -x, -y, -z};
  }

  Mat3 to_matrix() const {
    const double ww = w * w, xx = x * x, yy = y * y, zz = z * z;
    Mat3 r;
    r.m = {ww + xx - yy - zz, 2 * (x * y - w * z), 2 * (x * z + w * y),
           2 * (x * y + w * z), ww - xx + yy - zz, 2 * (y * z - w * x),
           2 * (x * z - w * y), 2 * (y * z + w * x), ww - xx - yy + zz};
    return r;
  }

  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), a.x * s, a.y * s, a.z * s};
  }

  static Quat identity() { return {1.0, 0.0, 0.0, 0.0}; }
};

inline Vec3 rotate_q(const Vec3& v, const Quat& q) {
  // q v q* expanded via the cross-product form.
  const Vec3 u{q.x, q.y, q.z};
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.w * t + u.cross(t);
}

// Rotation angle (radians) between two unit quaternions, antipodes identified.
inline double rotation_distance(const Quat& a, const Quat& b) {
  double d = std::abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z);
  if (d > 1.0) d = 1.0;
  return 2.0 * std::acos(d);
}

// Rotation angle of a single quaternion (radians in [0, pi]).
inline double rotation_angle(const Quat& q) {
  double c = std::abs(q.w);
  if (c > 1.0) c = 1.0;
  return 2.0 * std::acos(c);
}

} // namespace spi
