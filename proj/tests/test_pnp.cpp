#include <doctest.h>

#include "kgnpro/error.hpp"
#include "test_support.hpp"

using namespace kgnpro;
using test::corners_observation;
using test::random_visible_pose;

TEST_CASE("reprojection residual: zero at generating pose, sign convention") {
  SeededRng rng(21);
  const Pose y = random_visible_pose(rng);
  CorrespondenceSet x = corners_observation(y);
  for (const auto& c : x.items)
    CHECK(reproj_error(c, x.intrinsics, y).norm() < 1e-10);

  Correspondence shifted = x.items[0];
  shifted.p2d += Vector2d(3.0, -4.0);
  CHECK((reproj_error(shifted, x.intrinsics, y) - Vector2d(-3.0, 4.0)).norm() <
        1e-10);
}

TEST_CASE("reprojection residual matches an independent projection pipeline") {
  SeededRng rng(22);
  for (int t = 0; t < 100; ++t) {
    const Pose y = random_visible_pose(rng);
    Correspondence c;
    c.p3d = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
             rng.uniform(-0.05, 0.05)};
    c.p2d = {rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0)};
    CameraIntrinsics k;
    // Transform and project by hand.
    const Vector3d p = y.rotation.toRotationMatrix() * c.p3d + y.translation;
    const Vector2d byhand(k.fx * p.x() / p.z() + k.cx,
                          k.fy * p.y() / p.z() + k.cy);
    CHECK((reproj_error(c, k, y) - (byhand - c.p2d)).norm() < 1e-9);
  }
}

TEST_CASE("weighted cost: trivial values and brute-force oracle") {
  SeededRng rng(23);
  const Pose y = random_visible_pose(rng);
  CorrespondenceSet x = corners_observation(y, 4, &rng);

  CorrespondenceSet zeroed = x;
  for (auto& c : zeroed.items) c.w2d.setZero();
  CHECK(weighted_cost(zeroed, random_visible_pose(rng)) == 0.0);

  for (int t = 0; t < 100; ++t) {
    CorrespondenceSet probe = x;
    for (auto& c : probe.items) {
      c.p2d += Vector2d(rng.uniform(-5, 5), rng.uniform(-5, 5));
      c.w2d = {rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};
    }
    const Pose yp = random_visible_pose(rng);
    double naive = 0.0;
    for (const auto& c : probe.items) {
      const Vector2d e = reproj_error(c, probe.intrinsics, yp);
      const double ex = c.w2d.x() * e.x();
      const double ey = c.w2d.y() * e.y();
      naive += 0.5 * (ex * ex + ey * ey);
    }
    const double got = weighted_cost(probe, yp);
    CHECK(std::abs(got - naive) <= 1e-9 * std::max(1.0, naive));
  }
}

TEST_CASE("cost jacobian: stationary at noiseless optimum, zero-weight rows") {
  SeededRng rng(24);
  const Pose y = random_visible_pose(rng);
  CorrespondenceSet x = corners_observation(y, 2, &rng);
  const CostDerivatives d = cost_jacobian(x, y);
  CHECK(d.gradient.norm() < 1e-8);

  CorrespondenceSet xz = x;
  xz.items[1].w2d.setZero();
  const CostDerivatives dz = cost_jacobian(xz, y);
  CHECK(dz.jacobian.row(2).norm() == 0.0);
  CHECK(dz.jacobian.row(3).norm() == 0.0);
}

TEST_CASE("cost jacobian matches central finite differences") {
  SeededRng rng(25);
  const double h = 1e-6;
  for (int t = 0; t < 100; ++t) {
    const Pose y = random_visible_pose(rng);
    CorrespondenceSet x = corners_observation(y, rng.uniform_int(0, 4), &rng);
    for (auto& c : x.items) {
      c.p2d += Vector2d(rng.uniform(-3, 3), rng.uniform(-3, 3));
      c.w2d = {rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)};
    }
    const Pose probe = pose_compose(
        se3_exp(Twist{{rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                       rng.uniform(-0.02, 0.02)},
                      {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                       rng.uniform(-0.1, 0.1)}}),
        y);

    const CostDerivatives d = cost_jacobian(x, probe);
    Eigen::MatrixXd fd(d.jacobian.rows(), 6);
    for (int k = 0; k < 6; ++k) {
      Vector6d step = Vector6d::Zero();
      step(k) = h;
      const Pose plus = pose_compose(se3_exp(Twist::from_packed(step)), probe);
      step(k) = -h;
      const Pose minus = pose_compose(se3_exp(Twist::from_packed(step)), probe);
      const CostDerivatives dp = cost_jacobian(x, plus);
      const CostDerivatives dm = cost_jacobian(x, minus);
      fd.col(k) = (dp.residuals - dm.residuals) / (2.0 * h);
    }
    CHECK((d.jacobian - fd).norm() / d.jacobian.norm() < 1e-4);
  }
}

TEST_CASE("solve_pnp: recovery from a perturbed init on noiseless corners") {
  SeededRng rng(26);
  SolverConfig cfg;
  for (int t = 0; t < 50; ++t) {
    const Pose gt = random_visible_pose(rng);
    const CorrespondenceSet x = corners_observation(gt);
    Twist d;
    d.rotation = (10.0 * M_PI / 180.0) * rng.unit_vector();
    d.translation = 0.03 * rng.unit_vector();
    const SolveReport rep = solve_pnp(x, pose_compose(se3_exp(d), gt), cfg);
    CHECK(rep.converged);
    CHECK(rotation_angle(rep.pose, gt) < 1e-6);
    CHECK(translation_distance(rep.pose, gt) < 1e-6);
  }
}

TEST_CASE("solve_pnp: init at ground truth converges immediately") {
  SeededRng rng(27);
  const Pose gt = random_visible_pose(rng);
  const CorrespondenceSet x = corners_observation(gt);
  const SolveReport rep = solve_pnp(x, gt, SolverConfig{});
  CHECK(rep.converged);
  CHECK(rep.iterations <= 2);
  CHECK(rep.cost < 1e-16);
}

TEST_CASE("solve_pnp: underdetermined inputs are rejected") {
  SeededRng rng(28);
  const Pose gt = random_visible_pose(rng);
  CorrespondenceSet x = corners_observation(gt);
  CorrespondenceSet zeroed = x;
  for (auto& c : zeroed.items) c.w2d.setZero();
  CHECK_THROWS_AS((void)solve_pnp(zeroed, gt, SolverConfig{}), Error);

  CorrespondenceSet three = x;
  three.items.pop_back();
  CHECK_THROWS_AS((void)solve_pnp(three, gt, SolverConfig{}), Error);
}

TEST_CASE("multi-start: noiseless global minimum, determinism") {
  SeededRng rng(29);
  SolverConfig cfg;
  int hits = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const Pose gt = random_visible_pose(rng);
    const CorrespondenceSet x = corners_observation(gt);
    SeededRng solver_rng(900 + t);
    const SolveReport rep = multi_start_solve(x, cfg, solver_rng);
    if (rep.cost < 1e-12) ++hits;
  }
  CHECK(hits >= trials * 99 / 100);

  const Pose gt = random_visible_pose(rng);
  const CorrespondenceSet x = corners_observation(gt);
  SeededRng r1(42), r2(42);
  const SolveReport a = multi_start_solve(x, cfg, r1);
  const SolveReport b = multi_start_solve(x, cfg, r2);
  CHECK(a.pose.translation == b.pose.translation);
  CHECK(a.pose.rotation.coeffs() == b.pose.rotation.coeffs());
  CHECK(a.restart_index == b.restart_index);
}

TEST_CASE("multi-start beats a single random start under 2 px noise") {
  SeededRng rng(30);
  SolverConfig cfg;
  std::vector<double> multi_err, single_err;
  for (int t = 0; t < 500; ++t) {
    const Pose gt = random_visible_pose(rng);
    CorrespondenceSet x = corners_observation(gt);
    for (auto& c : x.items)
      c.p2d += 2.0 * Vector2d(rng.normal(), rng.normal());

    SeededRng mrng(5000 + t);
    try {
      const SolveReport multi = multi_start_solve(x, cfg, mrng);
      multi_err.push_back(rotation_angle(multi.pose, gt));
    } catch (const Error&) {
      multi_err.push_back(M_PI);
    }

    // One uninformed start: canonical position, uniform random orientation.
    SeededRng srng = SeededRng(5000 + t).derive(99);
    Pose init = canonical_start(x, cfg.start_depth);
    init.rotation = Eigen::Quaterniond(
        Eigen::AngleAxisd(srng.uniform(0.0, M_PI), srng.unit_vector()));
    try {
      const SolveReport single = solve_pnp(x, init, cfg);
      single_err.push_back(rotation_angle(single.pose, gt));
    } catch (const Error&) {
      single_err.push_back(M_PI);
    }
  }
  std::sort(multi_err.begin(), multi_err.end());
  std::sort(single_err.begin(), single_err.end());
  CHECK(multi_err[multi_err.size() / 2] < single_err[single_err.size() / 2]);
}

TEST_CASE("invariant: frame equivariance of the minimizer") {
  SeededRng rng(31);
  SolverConfig cfg;
  for (int t = 0; t < 20; ++t) {
    const Pose gt = random_visible_pose(rng);
    const CorrespondenceSet x = corners_observation(gt);

    const Pose tf = test::random_pose(rng, 1.0, 0.05);
    CorrespondenceSet moved = x;
    for (auto& c : moved.items) c.p3d = tf.apply(c.p3d);

    SeededRng r1(7100 + t), r2(7100 + t);
    const SolveReport base = multi_start_solve(x, cfg, r1);
    const SolveReport remapped = multi_start_solve(moved, cfg, r2);
    const Pose expected = pose_compose(base.pose, pose_inverse(tf));
    CHECK(rotation_angle(remapped.pose, expected) < 1e-6);
    CHECK(translation_distance(remapped.pose, expected) < 1e-6);
  }
}

TEST_CASE("invariant: weight scaling leaves the argmin unchanged") {
  SeededRng rng(32);
  SolverConfig cfg;
  for (int t = 0; t < 20; ++t) {
    const Pose gt = random_visible_pose(rng);
    CorrespondenceSet x = corners_observation(gt);
    for (auto& c : x.items)
      c.p2d += Vector2d(rng.uniform(-2, 2), rng.uniform(-2, 2));

    CorrespondenceSet scaled = x;
    const double s = 3.7;
    for (auto& c : scaled.items) c.w2d *= s;

    SeededRng r1(7200 + t), r2(7200 + t);
    const SolveReport a = multi_start_solve(x, cfg, r1);
    const SolveReport b = multi_start_solve(scaled, cfg, r2);
    CHECK(rotation_angle(a.pose, b.pose) < 1e-6);
    CHECK(translation_distance(a.pose, b.pose) < 1e-6);
    CHECK(b.cost == doctest::Approx(s * s * a.cost).epsilon(1e-6));
  }
}

TEST_CASE("invariant: accepted LM steps never increase the cost") {
  SeededRng rng(33);
  for (int t = 0; t < 50; ++t) {
    const Pose gt = random_visible_pose(rng);
    CorrespondenceSet x = corners_observation(gt);
    for (auto& c : x.items)
      c.p2d += Vector2d(rng.uniform(-4, 4), rng.uniform(-4, 4));
    Twist d;
    d.rotation = 0.4 * rng.unit_vector();
    d.translation = 0.08 * rng.unit_vector();
    const SolveReport rep =
        solve_pnp(x, pose_compose(se3_exp(d), gt), SolverConfig{});
    for (size_t i = 1; i < rep.cost_trace.size(); ++i)
      CHECK(rep.cost_trace[i] <= rep.cost_trace[i - 1]);
  }
}

TEST_CASE("invariant: zero-weighted outlier equals omitting it") {
  SeededRng rng(34);
  SolverConfig cfg;
  for (int t = 0; t < 20; ++t) {
    const Pose gt = random_visible_pose(rng);
    CorrespondenceSet x = corners_observation(gt, 4, &rng);  // N = 8
    CorrespondenceSet corrupted = x;
    corrupted.items[5].p2d += Vector2d(50.0, 0.0);
    corrupted.items[5].w2d.setZero();
    CorrespondenceSet omitted = x;
    omitted.items.erase(omitted.items.begin() + 5);

    SeededRng r1(7300 + t), r2(7300 + t);
    const SolveReport a = multi_start_solve(corrupted, cfg, r1);
    const SolveReport b = multi_start_solve(omitted, cfg, r2);
    CHECK(rotation_angle(a.pose, b.pose) < 1e-9);
    CHECK(translation_distance(a.pose, b.pose) < 1e-9);
  }
}
