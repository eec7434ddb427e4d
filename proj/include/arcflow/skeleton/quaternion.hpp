#pragma once

// Quaternions as 4-vectors (w, x, y, z), templated on the scalar so pose
// gradients can run through Eigen::AutoDiffScalar. ln and exp switch to
// Taylor series near the real axis, where |v| has no derivative.

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <stdexcept>

namespace arcflow::skel {

template <class S>
using Quat = Eigen::Matrix<S, 4, 1>;
template <class S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S>
using Mat3 = Eigen::Matrix<S, 3, 3>;

inline double scalar_value(double x) { return x; }
template <class D>
double scalar_value(const Eigen::AutoDiffScalar<D>& x) {
  return x.value();
}

template <class S>
Quat<S> identity_quat() {
  return Quat<S>(S(1.0), S(0.0), S(0.0), S(0.0));
}

template <class S>
Quat<S> quat_mul(const Quat<S>& a, const Quat<S>& b) {
  Quat<S> r;
  r(0) = a(0) * b(0) - a(1) * b(1) - a(2) * b(2) - a(3) * b(3);
  r(1) = a(0) * b(1) + a(1) * b(0) + a(2) * b(3) - a(3) * b(2);
  r(2) = a(0) * b(2) - a(1) * b(3) + a(2) * b(0) + a(3) * b(1);
  r(3) = a(0) * b(3) + a(1) * b(2) - a(2) * b(1) + a(3) * b(0);
  return r;
}

template <class S>
Quat<S> quat_conj(const Quat<S>& q) {
  return Quat<S>(q(0), -q(1), -q(2), -q(3));
}

template <class S>
Quat<S> quat_normalized(const Quat<S>& q) {
  using std::sqrt;
  const S n = sqrt(q.squaredNorm());
  return q / n;
}

/// Same rotation with non-negative scalar part (rotation angle in [0, pi]).
template <class S>
Quat<S> principal(const Quat<S>& q) {
  return scalar_value(q(0)) < 0.0 ? Quat<S>(-q) : q;
}

namespace detail {
constexpr double kSeriesCutoff = 1e-12;  // on |v|^2
}

/// ln q = (ln |q|, v/|v| atan2(|v|, w)).
template <class S>
Quat<S> quat_ln(const Quat<S>& q) {
  using std::atan2;
  using std::log;
  using std::sqrt;
  const S vv = q(1) * q(1) + q(2) * q(2) + q(3) * q(3);
  const S qq = vv + q(0) * q(0);
  if (!(scalar_value(qq) > 0.0)) throw std::domain_error("logarithm of the zero quaternion");
  S f;
  if (scalar_value(vv) < detail::kSeriesCutoff && scalar_value(q(0)) > 0.0) {
    // atan2(s, w) / s = 1/w - s^2 / (3 w^3) + O(s^4)
    f = S(1.0) / q(0) - vv / (3.0 * q(0) * q(0) * q(0));
  } else {
    const S s = sqrt(vv);
    f = atan2(s, q(0)) / s;
  }
  return Quat<S>(0.5 * log(qq), f * q(1), f * q(2), f * q(3));
}

template <class S>
Quat<S> quat_exp(const Quat<S>& u) {
  using std::cos;
  using std::exp;
  using std::sin;
  using std::sqrt;
  const S vv = u(1) * u(1) + u(2) * u(2) + u(3) * u(3);
  S c, sinc;
  if (scalar_value(vv) < detail::kSeriesCutoff) {
    c = S(1.0) - vv / 2.0 + vv * vv / 24.0;
    sinc = S(1.0) - vv / 6.0 + vv * vv / 120.0;
  } else {
    const S s = sqrt(vv);
    c = cos(s);
    sinc = sin(s) / s;
  }
  const S e = exp(u(0));
  return Quat<S>(e * c, e * sinc * u(1), e * sinc * u(2), e * sinc * u(3));
}

/// exp(t ln q)
template <class S, class T>
Quat<S> quat_pow(const Quat<S>& q, const T& t) {
  return quat_exp<S>(quat_ln(q) * t);
}

/// d/dt q^t = ln(q) q^t
template <class S>
Quat<S> quat_time_derivative(const Quat<S>& q, double t) {
  return quat_mul<S>(quat_ln(q), quat_pow(q, t));
}

/// Rotation matrix of a unit quaternion.
template <class S>
Mat3<S> quat_to_matrix(const Quat<S>& q) {
  const S w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3<S> r;
  r(0, 0) = 1.0 - 2.0 * (y * y + z * z);
  r(0, 1) = 2.0 * (x * y - w * z);
  r(0, 2) = 2.0 * (x * z + w * y);
  r(1, 0) = 2.0 * (x * y + w * z);
  r(1, 1) = 1.0 - 2.0 * (x * x + z * z);
  r(1, 2) = 2.0 * (y * z - w * x);
  r(2, 0) = 2.0 * (x * z - w * y);
  r(2, 1) = 2.0 * (y * z + w * x);
  r(2, 2) = 1.0 - 2.0 * (x * x + y * y);
  return r;
}

/// q p q* for a unit quaternion.
template <class S>
Vec3<S> quat_rotate(const Quat<S>& q, const Vec3<S>& p) {
  return quat_to_matrix(q) * p;
}

/// Quaternion for a rotation of `angle` about `axis`.
inline Quat<double> axis_angle(const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d a = axis.normalized();
  const double s = std::sin(angle / 2.0);
  return {std::cos(angle / 2.0), s * a(0), s * a(1), s * a(2)};
}

/// Rotation angle in [0, pi] of a unit quaternion.
inline double rotation_angle(const Quat<double>& q) {
  const Quat<double> p = principal(q);
  return 2.0 * std::atan2(p.tail<3>().norm(), p(0));
}

}  // namespace arcflow::skel
