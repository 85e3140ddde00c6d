#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace aslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Skew-symmetric cross-product matrix, skew(a) * b == a.cross(b).
inline Mat3 skew(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return m;
}

/// Unit attitude quaternion stored as vector part and scalar part.
///
/// Conventions used throughout the library:
///  - rotation_matrix(q) maps body-frame vectors into the inertial frame;
///  - otimes(a, b) is the product whose left-multiplication matrix is
///      [a (x)] = [ a_s I - [a_v x]   a_v ]
///                [ -a_v^T            a_s ]
///    so rotation_matrix(otimes(q2, q1)) == rotation_matrix(q1) * rotation_matrix(q2).
class Quaternion {
 public:
  Quaternion() : v_(Vec3::Zero()), s_(1.0) {}
  Quaternion(const Vec3& v, double s) : v_(v), s_(s) {}
  Quaternion(double x, double y, double z, double w) : v_(x, y, z), s_(w) {}

  static Quaternion identity() { return {}; }
  static Quaternion from_axis_angle(const Vec3& axis, double angle);
  /// (x, y, z, w) layout.
  static Quaternion from_coeffs(const Vec4& xyzw) { return {xyzw.head<3>(), xyzw.w()}; }

  const Vec3& vec() const { return v_; }
  double scalar() const { return s_; }
  Vec4 coeffs() const { return {v_.x(), v_.y(), v_.z(), s_}; }

  double norm() const { return std::sqrt(v_.squaredNorm() + s_ * s_); }
  Quaternion conjugate() const { return {-v_, s_}; }
  Quaternion operator-() const { return {-v_, -s_}; }
  Quaternion normalized() const;
  bool all_finite() const { return v_.allFinite() && std::isfinite(s_); }

  /// Left-multiplication matrix [q (x)] acting on (x, y, z, w) coefficient vectors.
  Mat4 left_matrix() const;

 private:
  Vec3 v_;
  double s_;
};

using RotationMatrix = Mat3;

/// Raw product a (x) b without renormalization.
Quaternion otimes(const Quaternion& a, const Quaternion& b);

/// Composition q3 with rotation_matrix(q3) == rotation_matrix(q1) * rotation_matrix(q2);
/// equals otimes(q2, q1). Result is renormalized.
Quaternion quat_product(const Quaternion& q1, const Quaternion& q2);

RotationMatrix rotation_matrix(const Quaternion& q);

/// First-order attitude matrix I + 2[dqv x]; requires |dqv| < 0.5.
RotationMatrix small_angle_matrix(const Vec3& dqv);

/// exp((dt/2)[omega (x)]) q for body rate omega held constant over dt.
Quaternion quat_propagate(const Quaternion& q, const Vec3& omega, double dt);

/// Attitude deviation q (x) q_nom^*, sign-canonicalized to a non-negative scalar part.
Quaternion error_quat(const Quaternion& q, const Quaternion& q_nom);

/// Angle of q_hat^* (x) q_ref in [0, pi], invariant to the sign of either input.
double orientation_error(const Quaternion& q_hat, const Quaternion& q_ref);

/// Quaternion with rotation_matrix(result) == A (A must be a proper rotation).
Quaternion quat_from_matrix(const RotationMatrix& A);

}  // namespace aslam
