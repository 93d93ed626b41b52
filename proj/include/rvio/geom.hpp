#pragma once

// Rotation primitives. Quaternions are scalar-first with the Hamilton product;
// C(q) is the coordinate-change matrix, so for q = q_a^b we have b_x = C(q) a_x
// and C(q1 ⊗ q2) = C(q2) C(q1).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdio>

namespace rvio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Quaternion() = default;
  Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}
  Quaternion(double w_, const Vec3& v) : w(w_), x(v.x()), y(v.y()), z(v.z()) {}

  static Quaternion identity() { return {}; }

  Vec3 vec() const { return {x, y, z}; }
  Vec4 coeffs() const { return {w, x, y, z}; }
  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quaternion normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quaternion conjugate() const { return {w, -x, -y, -z}; }
};

/// Antisymmetric matrix with skew(u) * v == u.cross(v).
inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Rate matrix of q̇ = ½ Ω(ω) q.
inline Mat4 omega(const Vec3& w) {
  Mat4 m;
  m(0, 0) = 0.0;
  m.block<1, 3>(0, 1) = -w.transpose();
  m.block<3, 1>(1, 0) = w;
  m.block<3, 3>(1, 1) = -skew(w);
  return m;
}

inline Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quaternion operator*(const Quaternion& a, const Quaternion& b) { return quat_mul(a, b); }

/// Coordinate-change matrix C(q). Non-unit input is normalized first.
inline Mat3 to_rotation(const Quaternion& q_in) {
  Quaternion q = q_in;
  const double n = q.norm();
  if (std::abs(n - 1.0) > 1e-9) {
#ifndef NDEBUG
    std::fprintf(stderr, "rvio: to_rotation renormalized a quaternion with norm %.12g\n", n);
#endif
    q = q.normalized();
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  // Active rotation R(q); C(q) is its transpose.
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r.transpose();
}

/// δq ≃ [1, ½δθ] renormalized.
inline Quaternion small_angle_quat(const Vec3& dtheta) {
  return Quaternion(1.0, 0.5 * dtheta).normalized();
}

/// Exact rotation-vector exponential; used by the simulator and tests.
inline Quaternion quat_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) return Quaternion(1.0, 0.5 * rotvec).normalized();
  const double half = 0.5 * angle;
  return Quaternion(std::cos(half), std::sin(half) / angle * rotvec);
}

/// Rotation vector of a unit quaternion, angle in [0, π].
inline Vec3 quat_log(const Quaternion& q_in) {
  Quaternion q = q_in.normalized();
  if (q.w < 0) q = {-q.w, -q.x, -q.y, -q.z};
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-15) return 2.0 * v;
  return 2.0 * std::atan2(s, q.w) / s * v;
}

inline double rotation_angle(const Quaternion& q) { return quat_log(q).norm(); }

/// Angle of the relative rotation between two orientations.
inline double angle_between(const Quaternion& a, const Quaternion& b) {
  return rotation_angle(quat_mul(a.conjugate(), b));
}

/// Inverse of to_rotation for orthonormal input.
inline Quaternion from_rotation(const Mat3& c) {
  const Eigen::Quaterniond e(Mat3(c.transpose()));
  return Quaternion(e.w(), e.x(), e.y(), e.z()).normalized();
}

/// SO(3) right Jacobian, Exp(φ + δ) ≈ Exp(φ) Exp(Jr(φ) δ).
inline Mat3 right_jacobian(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 k = skew(phi);
  if (t < 1e-6) return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  return Mat3::Identity() - (1.0 - std::cos(t)) / (t * t) * k + (t - std::sin(t)) / (t * t * t) * k * k;
}

}  // namespace rvio
