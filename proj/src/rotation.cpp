#include "aslam/rotation.hpp"

#include <algorithm>

#include "aslam/error.hpp"

namespace aslam {

namespace {

void require_finite(const Quaternion& q, const char* what) {
  if (!q.all_finite()) throw Error(ErrorCode::kInvalidInput, std::string(what) + " has non-finite components");
}

}  // namespace

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(angle)) {
    throw Error(ErrorCode::kInvalidInput, "axis-angle needs a non-zero finite axis");
  }
  return {axis / n * std::sin(0.5 * angle), std::cos(0.5 * angle)};
}

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 0.0)) throw Error(ErrorCode::kInvalidInput, "cannot normalize a zero quaternion");
  return {v_ / n, s_ / n};
}

Mat4 Quaternion::left_matrix() const {
  Mat4 m;
  m.topLeftCorner<3, 3>() = s_ * Mat3::Identity() - skew(v_);
  m.topRightCorner<3, 1>() = v_;
  m.bottomLeftCorner<1, 3>() = -v_.transpose();
  m(3, 3) = s_;
  return m;
}

Quaternion otimes(const Quaternion& a, const Quaternion& b) {
  const Vec3 v = a.scalar() * b.vec() + b.scalar() * a.vec() - a.vec().cross(b.vec());
  const double s = a.scalar() * b.scalar() - a.vec().dot(b.vec());
  return {v, s};
}

Quaternion quat_product(const Quaternion& q1, const Quaternion& q2) {
  require_finite(q1, "q1");
  require_finite(q2, "q2");
  return otimes(q2, q1).normalized();
}

RotationMatrix rotation_matrix(const Quaternion& q) {
  require_finite(q, "q");
  const double s = q.scalar();
  const Vec3& v = q.vec();
  return (2.0 * s * s - 1.0) * Mat3::Identity() + 2.0 * s * skew(v) + 2.0 * v * v.transpose();
}

RotationMatrix small_angle_matrix(const Vec3& dqv) {
  if (!dqv.allFinite() || !(dqv.norm() < 0.5)) {
    throw Error(ErrorCode::kOutOfDomain, "small-angle attitude requires |dqv| < 0.5");
  }
  return Mat3::Identity() + 2.0 * skew(dqv);
}

Quaternion quat_propagate(const Quaternion& q, const Vec3& omega, double dt) {
  require_finite(q, "q");
  if (!omega.allFinite() || !std::isfinite(dt) || dt < 0.0) {
    throw Error(ErrorCode::kInvalidInput, "propagation needs finite omega and dt >= 0");
  }
  const double rate = omega.norm();
  const double half = 0.5 * rate * dt;
  double c = 0.0;
  double sin_over_rate = 0.0;  // sin(half) / rate
  if (rate * dt < 1e-6) {
    const double h2 = half * half;
    c = 1.0 - h2 / 2.0 + h2 * h2 / 24.0;
    sin_over_rate = 0.5 * dt * (1.0 - h2 / 6.0 + h2 * h2 / 120.0);
  } else {
    c = std::cos(half);
    sin_over_rate = std::sin(half) / rate;
  }
  // exp((dt/2)[w (x)]) = cos(half) I + sin(half)/|w| [w (x)], with [w (x)] q = otimes((w, 0), q).
  const Vec3 v = c * q.vec() + sin_over_rate * (q.scalar() * omega - omega.cross(q.vec()));
  const double s = c * q.scalar() - sin_over_rate * omega.dot(q.vec());
  return Quaternion(v, s).normalized();
}

Quaternion error_quat(const Quaternion& q, const Quaternion& q_nom) {
  require_finite(q, "q");
  require_finite(q_nom, "q_nom");
  Quaternion dq = otimes(q, q_nom.conjugate()).normalized();
  if (dq.scalar() < 0.0) dq = -dq;
  return dq;
}

double orientation_error(const Quaternion& q_hat, const Quaternion& q_ref) {
  require_finite(q_hat, "q_hat");
  require_finite(q_ref, "q_ref");
  const Quaternion d = otimes(q_hat.conjugate(), q_ref);
  // 2 asin(|vec|) for a unit quaternion; atan2 keeps full precision near pi.
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.scalar()));
}

Quaternion quat_from_matrix(const RotationMatrix& A) {
  const double tr = A.trace();
  Vec4 c;
  if (tr > 0.0) {
    const double w = 0.5 * std::sqrt(1.0 + tr);
    c << (A(2, 1) - A(1, 2)) / (4.0 * w), (A(0, 2) - A(2, 0)) / (4.0 * w), (A(1, 0) - A(0, 1)) / (4.0 * w), w;
  } else {
    int i = 0;
    if (A(1, 1) > A(0, 0)) i = 1;
    if (A(2, 2) > A(i, i)) i = 2;
    const int j = (i + 1) % 3;
    const int k = (j + 1) % 3;
    const double t = 0.5 * std::sqrt(std::max(0.0, 1.0 + A(i, i) - A(j, j) - A(k, k)));
    c(i) = t;
    c(j) = (A(j, i) + A(i, j)) / (4.0 * t);
    c(k) = (A(k, i) + A(i, k)) / (4.0 * t);
    c(3) = (A(k, j) - A(j, k)) / (4.0 * t);
  }
  return Quaternion::from_coeffs(c).normalized();
}

}  // namespace aslam
