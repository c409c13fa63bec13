#include "splat4d/se3.hpp"

#include <cmath>

namespace splat4d {

namespace {
constexpr double kSmallAngle = 1e-6;      // switch to 2nd-order series
constexpr double kLogSingular = M_PI - 1e-3;
}  // namespace

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::normalized() const {
  const double n = norm();
  return {w / n, x / n, y / n, z / n};
}

Mat3 Quat::to_matrix() const {
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Vec3 Quat::rotate(const Vec3& v) const {
  const Vec3 u(x, y, z);
  const Vec3 uv = u.cross(v);
  return v + 2.0 * (w * uv + u.cross(uv));
}

Quat quat_mul(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quat quat_from_axis_angle(const Vec3& aa) {
  const double theta = aa.norm();
  double half_sinc;  // sin(theta/2) / theta
  if (theta < kSmallAngle) {
    half_sinc = 0.5 - theta * theta / 48.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
  }
  return {std::cos(0.5 * theta), aa.x() * half_sinc, aa.y() * half_sinc, aa.z() * half_sinc};
}

Vec3 quat_to_axis_angle(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w < 0) q = -q;  // shortest-arc branch
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) {
    // theta/s -> 2/w for s -> 0
    return v * (2.0 / q.w) * (1.0 - s * s / (3.0 * q.w * q.w));
  }
  const double theta = 2.0 * std::atan2(s, q.w);
  return v * (theta / s);
}

Mat4x4 quat_left_matrix(const Quat& a) {
  Mat4x4 L;
  L << a.w, -a.x, -a.y, -a.z,
      a.x, a.w, -a.z, a.y,
      a.y, a.z, a.w, -a.x,
      a.z, -a.y, a.x, a.w;
  return L;
}

Mat4x4 quat_right_matrix(const Quat& b) {
  Mat4x4 R;
  R << b.w, -b.x, -b.y, -b.z,
      b.x, b.w, b.z, -b.y,
      b.y, -b.z, b.w, b.x,
      b.z, b.y, -b.x, b.w;
  return R;
}

Eigen::Matrix<double, 3, 4> rotate_jacobian_wrt_quat(const Quat& q, const Vec3& v) {
  const Vec3 u = q.vec();
  const Vec3 uv = u.cross(v);
  Eigen::Matrix<double, 3, 4> J;
  J.col(0) = 2.0 * uv;
  const Mat3 m = 2.0 * (-q.w * skew(v) - skew(uv) - skew(u) * skew(v));
  J.block<3, 3>(0, 1) = m;
  return J;
}

Vec4 matrix_jacobian_contract(const Quat& q, const Mat3& G) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 dw, dx, dy, dz;
  dw << 0, -z, y, z, 0, -x, -y, x, 0;
  dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  Vec4 out;
  out << 2 * (G.array() * dw.array()).sum(), 2 * (G.array() * dx.array()).sum(),
      2 * (G.array() * dy.array()).sum(), 2 * (G.array() * dz.array()).sum();
  return out;
}

Vec4 normalize_backward(const Quat& q_raw, const Vec4& d_qhat) {
  const double n = q_raw.norm();
  const Vec4 qh = q_raw.coeffs() / n;
  return (d_qhat - qh * qh.dot(d_qhat)) / n;
}

SE3Pose SE3Pose::inverse() const {
  const Quat qi = rotation.conjugate();
  return {qi, -qi.rotate(translation)};
}

SE3Pose SE3Pose::compose(const SE3Pose& rhs) const {
  SE3Pose out;
  out.rotation = quat_mul(rotation, rhs.rotation).normalized();
  out.translation = rotation.rotate(rhs.translation) + translation;
  return out;
}

double SE3Pose::rotation_angle() const {
  return quat_to_axis_angle(rotation).norm();
}

DualQuat DualQuat::from_pose(const SE3Pose& T) {
  const Quat r = T.rotation.normalized();
  const Quat d = quat_mul(Quat::pure(T.translation), r).scaled(0.5);
  return {r, d};
}

SE3Pose DualQuat::to_pose() const {
  const double n = real.norm();
  const Quat r = real.scaled(1.0 / n);
  Quat d = dual.scaled(1.0 / n);
  d = d + r.scaled(-r.dot(d));  // remove the component along the real part
  const Quat t2 = quat_mul(d, r.conjugate());
  SE3Pose out;
  out.rotation = r;
  out.translation = 2.0 * t2.vec();
  return out;
}

DualQuat dq_mul(const DualQuat& a, const DualQuat& b) {
  return {quat_mul(a.real, b.real),
          quat_mul(a.real, b.dual) + quat_mul(a.dual, b.real)};
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = skew(phi);
  double c1, c2;  // V = I + c1 K + c2 K^2
  if (theta < kSmallAngle) {
    c1 = 0.5 - theta * theta / 24.0;
  } else {
    // (1 - cos)/th^2 via the half-angle form, which never cancels.
    const double s = std::sin(0.5 * theta);
    c1 = 2.0 * s * s / (theta * theta);
  }
  const double t2 = theta * theta;
  if (theta < 1e-2) {
    c2 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    c2 = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Mat3::Identity() + c1 * K + c2 * K * K;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = skew(phi);
  double c;
  if (theta < 1e-2) {
    const double t2 = theta * theta;
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    c = (1.0 - 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta))) / (theta * theta);
  }
  return Mat3::Identity() - 0.5 * K + c * K * K;
}

SE3Pose se3_exp(const Twist& xi) {
  SE3Pose out;
  out.rotation = quat_from_axis_angle(xi.rotational);
  out.translation = so3_left_jacobian(xi.rotational) * xi.translational;
  return out;
}

Twist se3_log(const SE3Pose& T) {
  const Vec3 phi = quat_to_axis_angle(T.rotation);
  if (phi.norm() >= kLogSingular) {
    throw NearAngularSingularity("se3_log: rotation angle within 1e-3 of pi");
  }
  return {phi, so3_left_jacobian_inverse(phi) * T.translation};
}

SE3Pose dqb(const std::vector<double>& weights, const std::vector<DualQuat>& transforms) {
  if (weights.empty() || weights.size() != transforms.size()) {
    throw EmptyBlend("dqb: empty or mismatched weight/transform lists");
  }
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (!(wsum > 0.0)) throw EmptyBlend("dqb: all weights are zero");

  const Quat ref = transforms[0].real;
  Quat acc_r{0, 0, 0, 0}, acc_d{0, 0, 0, 0};
  for (size_t i = 0; i < transforms.size(); ++i) {
    double w = weights[i] / wsum;
    if (transforms[i].real.dot(ref) < 0.0) w = -w;
    acc_r = acc_r + transforms[i].real.scaled(w);
    acc_d = acc_d + transforms[i].dual.scaled(w);
  }
  return DualQuat{acc_r, acc_d}.to_pose();
}

SE3Pose interpolate_pose(const SE3Pose& T_s, const SE3Pose& T_e, double fraction) {
  const Twist xi = se3_log(T_s.inverse() * T_e);
  return se3_exp(xi.scaled(fraction));
}

Mat6 se3_adjoint(const SE3Pose& T) {
  const Mat3 R = T.rotation_matrix();
  Mat6 A = Mat6::Zero();
  A.block<3, 3>(0, 0) = R;
  A.block<3, 3>(3, 3) = R;
  A.block<3, 3>(3, 0) = skew(T.translation) * R;
  return A;
}

namespace {

// Barfoot's Q matrix coupling translation and rotation in the SE(3) Jacobian.
Mat3 se3_jacobian_q(const Vec3& rho, const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 P = skew(phi);
  const Mat3 Rho = skew(rho);
  double c1, cA, cB;  // (theta-sin)/th^3, (1-th^2/2-cos)/th^4, (th-sin-th^3/6)/th^5
  if (theta < 0.05) {
    const double t2 = theta * theta, t4 = t2 * t2;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
    cA = -1.0 / 24.0 + t2 / 720.0 - t4 / 40320.0;
    cB = -1.0 / 120.0 + t2 / 5040.0 - t4 / 362880.0;
  } else {
    const double t2 = theta * theta, t4 = t2 * t2;
    c1 = (theta - std::sin(theta)) / (t2 * theta);
    cA = (1.0 - 0.5 * t2 - std::cos(theta)) / t4;
    cB = (theta - std::sin(theta) - t2 * theta / 6.0) / (t4 * theta);
  }
  const Mat3 PR = P * Rho, RP = Rho * P, PRP = P * Rho * P;
  Mat3 Q = 0.5 * Rho + c1 * (PR + RP + PRP) - cA * (P * PR + RP * P - 3.0 * PRP) -
           0.5 * (cA - 3.0 * cB) * (PRP * P + P * PRP);
  return Q;
}

}  // namespace

Mat6 se3_left_jacobian(const Twist& xi) {
  const Mat3 J = so3_left_jacobian(xi.rotational);
  Mat6 out = Mat6::Zero();
  out.block<3, 3>(0, 0) = J;
  out.block<3, 3>(3, 3) = J;
  out.block<3, 3>(3, 0) = se3_jacobian_q(xi.translational, xi.rotational);
  return out;
}

Mat6 se3_left_jacobian_inverse(const Twist& xi) {
  const Mat3 Ji = so3_left_jacobian_inverse(xi.rotational);
  const Mat3 Q = se3_jacobian_q(xi.translational, xi.rotational);
  Mat6 out = Mat6::Zero();
  out.block<3, 3>(0, 0) = Ji;
  out.block<3, 3>(3, 3) = Ji;
  out.block<3, 3>(3, 0) = -Ji * Q * Ji;
  return out;
}

}  // namespace splat4d
