#pragma once

#include "kgnpro/geometry.hpp"
#include "kgnpro/pnp.hpp"
#include "kgnpro/rng.hpp"
#include "kgnpro/scene.hpp"

namespace kgnpro::test {

inline Pose random_pose(SeededRng& rng, double max_angle = M_PI * 0.9,
                        double trans_range = 0.5) {
  Pose p;
  p.rotation = Eigen::Quaterniond(
      Eigen::AngleAxisd(rng.uniform(0.0, max_angle), rng.unit_vector()));
  p.translation = {rng.uniform(-trans_range, trans_range),
                   rng.uniform(-trans_range, trans_range),
                   rng.uniform(-trans_range, trans_range)};
  return p;
}

// A pose comfortably in front of the camera, gripper roughly facing it.
inline Pose random_visible_pose(SeededRng& rng, double max_angle = 1.0) {
  Pose p;
  p.rotation = Eigen::Quaterniond(
      Eigen::AngleAxisd(rng.uniform(0.0, max_angle), rng.unit_vector()));
  p.translation = {rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12),
                   rng.uniform(0.4, 0.8)};
  return p;
}

// Noiseless correspondences of the gripper corners under `pose`, plus
// optional extra model points, unit weights.
inline CorrespondenceSet corners_observation(const Pose& pose, int extra = 0,
                                             SeededRng* rng = nullptr) {
  CorrespondenceSet x;
  x.intrinsics = CameraIntrinsics{};
  GripperModel g;
  for (const auto& c : g.corners())
    x.items.push_back({project(x.intrinsics, pose.apply(c)), c, {1.0, 1.0}});
  for (int i = 0; i < extra; ++i) {
    const Vector3d p3d(rng->uniform(-0.05, 0.05), rng->uniform(-0.05, 0.05),
                       rng->uniform(-0.05, 0.05));
    x.items.push_back({project(x.intrinsics, pose.apply(p3d)), p3d, {1.0, 1.0}});
  }
  return x;
}

}  // namespace kgnpro::test
