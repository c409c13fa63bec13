#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <vector>

#include "splat4d/errors.hpp"

namespace splat4d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec4 = Eigen::Vector4d;
using Mat4x4 = Eigen::Matrix4d;

// Quaternion in (w, x, y, z) order, right-handed, acting on column vectors.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  static Quat identity() { return {1.0, 0.0, 0.0, 0.0}; }
  static Quat pure(const Vec3& v) { return {0.0, v.x(), v.y(), v.z()}; }

  Vec4 coeffs() const { return {w, x, y, z}; }
  static Quat from_coeffs(const Vec4& c) { return {c[0], c[1], c[2], c[3]}; }

  double norm() const;
  double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  Quat conjugate() const { return {w, -x, -y, -z}; }
  Quat normalized() const;
  Quat scaled(double s) const { return {w * s, x * s, y * s, z * s}; }
  Quat operator+(const Quat& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
  Quat operator-() const { return {-w, -x, -y, -z}; }

  Vec3 vec() const { return {x, y, z}; }
  Mat3 to_matrix() const;  // assumes unit norm
  Vec3 rotate(const Vec3& v) const;
};

Quat quat_mul(const Quat& a, const Quat& b);
Quat quat_from_axis_angle(const Vec3& axis_angle);  // exp of so(3)
Vec3 quat_to_axis_angle(const Quat& q);             // log, angle in [0, pi]

// 4x4 matrices L(a), R(b) with quat_mul(a,b) = L(a)*b.coeffs() = R(b)*a.coeffs().
Mat4x4 quat_left_matrix(const Quat& a);
Mat4x4 quat_right_matrix(const Quat& b);

// d(rotate(q, v))/dq for unit q, as a 3x4 matrix over (w,x,y,z).
Eigen::Matrix<double, 3, 4> rotate_jacobian_wrt_quat(const Quat& q, const Vec3& v);
// d(q.to_matrix())/dq_k, contracted with an adjoint matrix G: returns dL/dq.
Vec4 matrix_jacobian_contract(const Quat& q, const Mat3& G);
// Backward through q_hat = q / |q|: maps dL/dq_hat to dL/dq.
Vec4 normalize_backward(const Quat& q_raw, const Vec4& d_qhat);

// Twist: rotation-first tangent vector of SE(3).
struct Twist {
  Vec3 rotational = Vec3::Zero();     // radians
  Vec3 translational = Vec3::Zero();  // meters

  Twist() = default;
  Twist(const Vec3& rot, const Vec3& trans) : rotational(rot), translational(trans) {}

  Vec6 coeffs() const {
    Vec6 v;
    v << rotational, translational;
    return v;
  }
  static Twist from_coeffs(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Twist scaled(double s) const { return {rotational * s, translational * s}; }
};

// Rigid transform: p' = rotation * p + translation.
struct SE3Pose {
  Quat rotation = Quat::identity();
  Vec3 translation = Vec3::Zero();

  SE3Pose() = default;
  SE3Pose(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

  static SE3Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  SE3Pose inverse() const;
  SE3Pose compose(const SE3Pose& rhs) const;  // this ∘ rhs
  Mat3 rotation_matrix() const { return rotation.to_matrix(); }

  double rotation_angle() const;
};

inline SE3Pose operator*(const SE3Pose& a, const SE3Pose& b) { return a.compose(b); }

// Dual quaternion (real + eps * dual); valid rigid transforms have unit real
// part and real·dual = 0.
struct DualQuat {
  Quat real = Quat::identity();
  Quat dual = {0.0, 0.0, 0.0, 0.0};

  DualQuat() = default;
  DualQuat(const Quat& r, const Quat& d) : real(r), dual(d) {}

  static DualQuat from_pose(const SE3Pose& T);
  SE3Pose to_pose() const;  // renormalizes

  DualQuat conjugate() const { return {real.conjugate(), dual.conjugate()}; }
};

DualQuat dq_mul(const DualQuat& a, const DualQuat& b);

// --- core operations -------------------------------------------------------

// Closed-form Rodrigues exponential; series below 1e-6 rad.
SE3Pose se3_exp(const Twist& xi);

// Inverse of se3_exp. Throws NearAngularSingularity for angle >= pi - 1e-3.
Twist se3_log(const SE3Pose& T);

// Dual-quaternion blending. Weights are normalized internally; operands are
// hemisphere-aligned against the first one. Throws EmptyBlend if all weights
// are zero (or the list is empty).
SE3Pose dqb(const std::vector<double>& weights, const std::vector<DualQuat>& transforms);

// Geodesic fraction of the relative motion: exp(fraction * log(Ts^-1 Te)).
// fraction 0 -> identity, fraction 1 -> Ts^-1 Te.
SE3Pose interpolate_pose(const SE3Pose& T_s, const SE3Pose& T_e, double fraction);

// --- tangent-space linear algebra (used by blur-pose gradients) ------------

Mat3 skew(const Vec3& v);
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);

// Adjoint of T for rotation-first twists: exp(Adj(T) xi) = T exp(xi) T^-1.
Mat6 se3_adjoint(const SE3Pose& T);

// Left Jacobian of SE(3): exp(xi + d) ≈ exp(J_l(xi) d) exp(xi).
Mat6 se3_left_jacobian(const Twist& xi);
Mat6 se3_left_jacobian_inverse(const Twist& xi);

}  // namespace splat4d
