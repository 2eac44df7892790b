#include <doctest.h>

#include "kgnpro/error.hpp"
#include "test_support.hpp"

using namespace kgnpro;
using test::random_pose;

TEST_CASE("compose: identity and inverse") {
  SeededRng rng(11);
  const Pose p = random_pose(rng);
  const Pose ip = pose_compose(Pose::identity(), p);
  CHECK(rotation_angle(ip, p) < 1e-12);
  CHECK(translation_distance(ip, p) < 1e-12);

  const Pose e = pose_compose(p, pose_inverse(p));
  CHECK(rotation_angle(e, Pose::identity()) < 1e-9);
  CHECK(e.translation.norm() < 1e-9);
  CHECK(std::abs(p.rotation.norm() - 1.0) < 1e-9);
}

TEST_CASE("compose agrees with sequential point application") {
  SeededRng rng(12);
  for (int t = 0; t < 100; ++t) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose ab = pose_compose(a, b);
    const Vector3d pt(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                      rng.uniform(-1.0, 1.0));
    CHECK((ab.apply(pt) - a.apply(b.apply(pt))).norm() < 1e-12);
  }
}

TEST_CASE("inverse: analytic and round trip") {
  Pose t;
  t.translation = {0.0, 0.0, 0.5};
  CHECK((pose_inverse(t).translation - Vector3d(0, 0, -0.5)).norm() < 1e-15);

  SeededRng rng(13);
  const Pose p = random_pose(rng);
  const Pose pp = pose_inverse(pose_inverse(p));
  CHECK(rotation_angle(pp, p) < 1e-9);
  CHECK(translation_distance(pp, p) < 1e-9);
}

TEST_CASE("se3 exp/log: axis-angle cases") {
  CHECK(se3_exp(Twist{}).translation.norm() == 0.0);
  CHECK(rotation_angle(se3_exp(Twist{}), Pose::identity()) == 0.0);

  Twist t;
  t.rotation = {0.0, 0.0, M_PI / 2.0};
  const Pose p = se3_exp(t);
  CHECK(p.translation.norm() < 1e-15);
  CHECK((p.apply(Vector3d(1, 0, 0)) - Vector3d(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("se3 exp/log: round trip over seeded poses") {
  SeededRng rng(14);
  for (int t = 0; t < 1000; ++t) {
    const Pose p = random_pose(rng, M_PI - 1e-3);
    const Pose q = se3_exp(se3_log(p));
    CHECK(rotation_angle(p, q) < 1e-9);
    CHECK(translation_distance(p, q) < 1e-9);
  }
}

TEST_CASE("se3 log: singular at pi") {
  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI, Vector3d::UnitX()));
  CHECK_THROWS_AS((void)se3_log(p), Error);
}

TEST_CASE("se3 log: local composition to first order") {
  SeededRng rng(15);
  for (int t = 0; t < 50; ++t) {
    const Pose p = random_pose(rng, 2.5);
    Twist d;
    for (int i = 0; i < 3; ++i) {
      d.translation[i] = rng.uniform(-1e-3, 1e-3) / std::sqrt(3.0);
      d.rotation[i] = rng.uniform(-1e-3, 1e-3) / std::sqrt(3.0);
    }
    const Pose lhs =
        pose_compose(se3_exp(d), pose_compose(p, pose_inverse(p)));
    const Twist back = se3_log(lhs);
    CHECK((back.packed() - d.packed()).norm() <= 1e-6);
  }
}

TEST_CASE("projection: formula, optical axis, depth invariance, errors") {
  CameraIntrinsics k;
  k.fx = k.fy = 100.0;
  k.cx = k.cy = 0.0;
  CHECK((project(k, {0.1, 0.0, 1.0}) - Vector2d(10.0, 0.0)).norm() < 1e-12);

  CameraIntrinsics kd;
  for (double z : {0.3, 1.0, 7.5})
    CHECK((project(kd, {0.0, 0.0, z}) - Vector2d(kd.cx, kd.cy)).norm() < 1e-12);

  SeededRng rng(16);
  for (int t = 0; t < 100; ++t) {
    const Vector3d p(rng.uniform(-1, 1), rng.uniform(-1, 1),
                     rng.uniform(0.2, 2.0));
    const double s = rng.uniform(0.1, 10.0);
    CHECK((project(kd, s * p) - project(kd, p)).norm() < 1e-8);
  }

  CHECK_THROWS_AS((void)project(kd, {0.0, 0.0, 0.0}), Error);
  CHECK_THROWS_AS((void)project(kd, {0.1, 0.1, -0.5}), Error);
}

TEST_CASE("gripper keypoints: identity, translation, equivariance") {
  GripperModel g;
  const auto base = gripper_keypoints_3d(g, Pose::identity());
  for (int i = 0; i < 4; ++i) CHECK((base[i] - g.corners()[i]).norm() == 0.0);

  Pose t;
  t.translation = {0.1, -0.2, 0.3};
  const auto shifted = gripper_keypoints_3d(g, t);
  for (int i = 0; i < 4; ++i)
    CHECK((shifted[i] - (g.corners()[i] + t.translation)).norm() < 1e-15);

  SeededRng rng(17);
  const Pose a = random_pose(rng);
  const Pose b = random_pose(rng);
  const auto lhs = gripper_keypoints_3d(g, pose_compose(a, b));
  const auto rhs = gripper_keypoints_3d(g, b);
  for (int i = 0; i < 4; ++i) CHECK((lhs[i] - a.apply(rhs[i])).norm() < 1e-12);
}

TEST_CASE("gripper symmetry: approach-axis flip permutes corners") {
  GripperModel g;
  const Pose flip = GripperModel::symmetry_flip();
  const auto flipped = gripper_keypoints_3d(g, flip);
  const auto perm = GripperModel::symmetry_map();
  for (int i = 0; i < 4; ++i)
    CHECK((flipped[i] - g.corners()[static_cast<size_t>(perm[i])]).norm() <
          1e-15);
}

TEST_CASE("gripper corners are coplanar but not collinear") {
  GripperModel g;
  const auto c = g.corners();
  Vector3d centroid = Vector3d::Zero();
  for (const auto& p : c) centroid += p / 4.0;
  Eigen::Matrix<double, 3, 4> m;
  for (int i = 0; i < 4; ++i) m.col(i) = c[static_cast<size_t>(i)] - centroid;
  const auto svd = m.jacobiSvd();
  CHECK(svd.singularValues()(1) > 1e-6);  // rank >= 2
}
