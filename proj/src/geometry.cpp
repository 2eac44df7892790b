#include "kgnpro/geometry.hpp"

#include <cmath>

#include "kgnpro/error.hpp"

namespace kgnpro {

namespace {

constexpr double kTaylorEps = 1e-10;

Matrix3d hat(const Vector3d& w) {
  Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Eigen::Quaterniond so3_exp(const Vector3d& omega) {
  const double theta = omega.norm();
  double w, k;
  if (theta < kTaylorEps) {
    w = 1.0 - theta * theta / 8.0;
    k = 0.5 - theta * theta / 48.0;
  } else {
    w = std::cos(0.5 * theta);
    k = std::sin(0.5 * theta) / theta;
  }
  return Eigen::Quaterniond(w, k * omega.x(), k * omega.y(), k * omega.z());
}

Vector3d so3_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double vn = q.vec().norm();
  const double theta = 2.0 * std::atan2(vn, q.w());
  if (theta > M_PI - 1e-9)
    raise(ErrorCode::LogMapSingular, "log map singular: rotation angle at pi");
  if (vn < kTaylorEps) return 2.0 * q.vec();
  return (theta / vn) * q.vec();
}

// Left Jacobian of SO(3): t = V * upsilon in the exponential map.
Matrix3d so3_left_jacobian(const Vector3d& omega) {
  const double theta = omega.norm();
  const Matrix3d W = hat(omega);
  if (theta < kTaylorEps)
    return Matrix3d::Identity() + 0.5 * W + W * W / 6.0;
  const double t2 = theta * theta;
  return Matrix3d::Identity() + ((1.0 - std::cos(theta)) / t2) * W +
         ((theta - std::sin(theta)) / (t2 * theta)) * W * W;
}

Matrix3d so3_left_jacobian_inv(const Vector3d& omega) {
  const double theta = omega.norm();
  const Matrix3d W = hat(omega);
  if (theta < kTaylorEps)
    return Matrix3d::Identity() - 0.5 * W + W * W / 12.0;
  const double half = 0.5 * theta;
  const double coeff =
      (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
  return Matrix3d::Identity() - 0.5 * W + coeff * W * W;
}

}  // namespace

Pose pose_compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose pose_inverse(const Pose& p) {
  Pose out;
  out.rotation = p.rotation.conjugate();
  out.translation = -(out.rotation * p.translation);
  return out;
}

double rotation_angle(const Pose& a, const Pose& b) {
  const Eigen::Quaterniond d =
      a.rotation.normalized().conjugate() * b.rotation.normalized();
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

double translation_distance(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

Vector6d Twist::packed() const {
  Vector6d v;
  v.head<3>() = translation;
  v.tail<3>() = rotation;
  return v;
}

Twist Twist::from_packed(const Vector6d& v) {
  return {v.head<3>(), v.tail<3>()};
}

Pose se3_exp(const Twist& t) {
  Pose p;
  p.rotation = so3_exp(t.rotation);
  p.translation = so3_left_jacobian(t.rotation) * t.translation;
  return p;
}

Twist se3_log(const Pose& p) {
  Twist t;
  t.rotation = so3_log(p.rotation);
  t.translation = so3_left_jacobian_inv(t.rotation) * p.translation;
  return t;
}

Vector2d project(const CameraIntrinsics& k, const Vector3d& p_cam) {
  if (p_cam.z() <= 1e-6)
    raise(ErrorCode::BehindCamera, "point behind or on camera plane");
  return {k.fx * p_cam.x() / p_cam.z() + k.cx,
          k.fy * p_cam.y() / p_cam.z() + k.cy};
}

bool in_image(const CameraIntrinsics& k, const Vector2d& px) {
  return px.x() >= 0.0 && px.x() < k.width && px.y() >= 0.0 &&
         px.y() < k.height;
}

std::array<Vector3d, 4> GripperModel::corners() const {
  const double h = 0.5 * open_width;
  return {Vector3d(h, 0.0, 0.0), Vector3d(-h, 0.0, 0.0),
          Vector3d(h, 0.0, depth), Vector3d(-h, 0.0, depth)};
}

Pose GripperModel::symmetry_flip() {
  Pose p;
  p.rotation = Eigen::Quaterniond(0.0, 0.0, 0.0, 1.0);  // Rz(pi)
  return p;
}

std::array<Vector3d, 4> gripper_keypoints_3d(const GripperModel& g,
                                             const Pose& grasp_pose) {
  std::array<Vector3d, 4> out;
  const auto c = g.corners();
  for (int i = 0; i < 4; ++i) out[i] = grasp_pose.apply(c[i]);
  return out;
}

}  // namespace kgnpro
