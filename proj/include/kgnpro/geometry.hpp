#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>

namespace kgnpro {

using Vector2d = Eigen::Vector2d;
using Vector3d = Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix3d = Eigen::Matrix3d;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Rigid transform, rotation stored as a unit quaternion (w, x, y, z).
// Composition renormalizes so the unit-norm invariant holds to 1e-9.
struct Pose {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Vector3d translation{0.0, 0.0, 0.0};

  static Pose identity() { return {}; }

  Vector3d apply(const Vector3d& p) const { return rotation * p + translation; }
};

Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& p);

// Geodesic angle of the relative rotation, in radians, in [0, pi].
double rotation_angle(const Pose& a, const Pose& b);
double translation_distance(const Pose& a, const Pose& b);

// Tangent-space element; the pose sampler and the least-squares solver both
// parameterize perturbations this way.
struct Twist {
  Vector3d translation{0.0, 0.0, 0.0};
  Vector3d rotation{0.0, 0.0, 0.0};

  // Packed order: translation first, rotation last. Jacobian columns follow it.
  Vector6d packed() const;
  static Twist from_packed(const Vector6d& v);
};

Pose se3_exp(const Twist& t);
// Requires rotation angle < pi; throws LogMapSingular at the antipode.
Twist se3_log(const Pose& p);

struct CameraIntrinsics {
  double fx = 616.0;
  double fy = 616.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
};

// Pinhole projection of a camera-frame point; requires z > 1e-6 m.
Vector2d project(const CameraIntrinsics& k, const Vector3d& p_cam);
bool in_image(const CameraIntrinsics& k, const Vector2d& px);

// Parallel-jaw gripper: closing axis +x, approach axis +z, fingertip plane
// z = 0 and body corners at z = depth. Corner order is semantic; keypoint i
// always refers to corner i.
struct GripperModel {
  double open_width = 0.08;
  double depth = 0.04;

  std::array<Vector3d, 4> corners() const;

  // Index permutation induced by the 180-degree flip about the approach
  // axis (the finger swap): corner i maps onto corner symmetry_map()[i].
  static std::array<int, 4> symmetry_map() { return {1, 0, 3, 2}; }

  // The flip itself, as a pose (pure rotation about +z).
  static Pose symmetry_flip();
};

std::array<Vector3d, 4> gripper_keypoints_3d(const GripperModel& g,
                                             const Pose& grasp_pose);

}  // namespace kgnpro
