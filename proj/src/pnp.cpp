#include "kgnpro/pnp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "kgnpro/error.hpp"

namespace kgnpro {

namespace {

constexpr double kBehindPenaltyPx = 1e6;
constexpr double kMinDepth = 1e-6;

int usable_count(const CorrespondenceSet& x) {
  int n = 0;
  for (const auto& c : x.items)
    if (c.w2d.x() > 0.0 && c.w2d.y() > 0.0) ++n;
  return n;
}

}  // namespace

Vector2d reproj_error(const Correspondence& c, const CameraIntrinsics& k,
                      const Pose& y) {
  const Vector3d p = y.apply(c.p3d);
  if (p.z() <= kMinDepth) return {kBehindPenaltyPx, kBehindPenaltyPx};
  return project(k, p) - c.p2d;
}

double weighted_cost(const CorrespondenceSet& x, const Pose& y) {
  double cost = 0.0;
  for (const auto& c : x.items) {
    const Vector2d e = reproj_error(c, x.intrinsics, y);
    cost += 0.5 * (c.w2d.cwiseProduct(e)).squaredNorm();
  }
  return cost;
}

CostDerivatives cost_jacobian(const CorrespondenceSet& x, const Pose& y) {
  const int n = static_cast<int>(x.items.size());
  CostDerivatives d;
  d.jacobian.setZero(2 * n, 6);
  d.residuals.setZero(2 * n);
  d.gradient.setZero();
  for (int i = 0; i < n; ++i) {
    const auto& c = x.items[i];
    const Vector3d p = y.apply(c.p3d);
    if (p.z() <= kMinDepth) {
      // Constant-penalty region: residual plateau, no derivative.
      d.residuals(2 * i) = c.w2d.x() * kBehindPenaltyPx;
      d.residuals(2 * i + 1) = c.w2d.y() * kBehindPenaltyPx;
      continue;
    }
    const double iz = 1.0 / p.z();
    const Vector2d e = project(x.intrinsics, p) - c.p2d;
    Eigen::Matrix<double, 2, 3> jproj;
    jproj << x.intrinsics.fx * iz, 0.0, -x.intrinsics.fx * p.x() * iz * iz,
        0.0, x.intrinsics.fy * iz, -x.intrinsics.fy * p.y() * iz * iz;
    // d(exp(delta) * p)/d(delta) at delta = 0: [I | -hat(p)]
    Eigen::Matrix<double, 3, 6> jpoint;
    jpoint.leftCols<3>().setIdentity();
    jpoint.rightCols<3>() << 0.0, p.z(), -p.y(), -p.z(), 0.0, p.x(), p.y(),
        -p.x(), 0.0;
    const Eigen::Matrix<double, 2, 6> j =
        c.w2d.asDiagonal() * (jproj * jpoint);
    d.jacobian.block<2, 6>(2 * i, 0) = j;
    d.residuals.segment<2>(2 * i) = c.w2d.cwiseProduct(e);
  }
  d.cost = 0.5 * d.residuals.squaredNorm();
  d.gradient = d.jacobian.transpose() * d.residuals;
  return d;
}

SolveReport solve_pnp(const CorrespondenceSet& x, const Pose& init,
                      const SolverConfig& cfg) {
  if (x.items.size() < 4 || usable_count(x) < 4)
    raise(ErrorCode::Underdetermined,
          "underdetermined: need >= 4 correspondences with positive weights");

  SolveReport rep;
  rep.pose = init;
  rep.pose.rotation.normalize();

  double lambda = cfg.lambda_init;
  CostDerivatives d = cost_jacobian(x, rep.pose);
  if (!std::isfinite(d.cost))
    raise(ErrorCode::NumericalFailure, "numerical failure: non-finite cost");
  rep.cost = d.cost;
  rep.cost_trace.push_back(d.cost);

  for (rep.iterations = 0; rep.iterations < cfg.max_iters; ++rep.iterations) {
    if (d.gradient.norm() < cfg.grad_tol) {
      rep.converged = true;
      break;
    }
    const Matrix6d h = d.jacobian.transpose() * d.jacobian;
    const Vector6d step =
        (h + lambda * Matrix6d::Identity()).ldlt().solve(-d.gradient);
    if (!step.allFinite()) {
      lambda = std::min(lambda * 10.0, cfg.lambda_max);
      continue;
    }
    const Pose candidate =
        pose_compose(se3_exp(Twist::from_packed(step)), rep.pose);
    const double new_cost = weighted_cost(x, candidate);
    if (!std::isfinite(new_cost))
      raise(ErrorCode::NumericalFailure, "numerical failure: non-finite cost");
    if (new_cost < rep.cost) {
      rep.pose = candidate;
      rep.cost = new_cost;
      rep.cost_trace.push_back(new_cost);
      lambda = std::max(lambda / 10.0, cfg.lambda_min);
      d = cost_jacobian(x, rep.pose);
      if (step.norm() < cfg.step_tol) {
        rep.converged = true;
        ++rep.iterations;
        break;
      }
    } else {
      lambda = std::min(lambda * 10.0, cfg.lambda_max);
      if (step.norm() < cfg.step_tol) {
        // Damping can no longer produce a useful step.
        rep.converged = true;
        ++rep.iterations;
        break;
      }
    }
  }
  return rep;
}

Pose canonical_start(const CorrespondenceSet& x, double depth) {
  Vector2d centroid(0.0, 0.0);
  for (const auto& c : x.items) centroid += c.p2d;
  if (!x.items.empty()) centroid /= static_cast<double>(x.items.size());
  Pose p;
  p.translation = {(centroid.x() - x.intrinsics.cx) / x.intrinsics.fx * depth,
                   (centroid.y() - x.intrinsics.cy) / x.intrinsics.fy * depth,
                   depth};
  return p;
}

SolveReport multi_start_solve(const CorrespondenceSet& x,
                              const SolverConfig& cfg, SeededRng& rng) {
  if (x.items.size() < 4 || usable_count(x) < 4)
    raise(ErrorCode::Underdetermined,
          "underdetermined: need >= 4 correspondences with positive weights");

  const Pose base = canonical_start(x, cfg.start_depth);
  bool have_best = false;
  SolveReport best;
  for (int s = 0; s < cfg.n_starts; ++s) {
    Pose init = base;
    if (s > 0) {
      SeededRng stream = rng.derive(static_cast<std::uint64_t>(s));
      const Vector3d axis = stream.unit_vector();
      const double angle = stream.uniform(0.0, cfg.start_rot_range);
      Twist t;
      t.rotation = angle * axis;
      for (int i = 0; i < 3; ++i)
        t.translation[i] =
            stream.uniform(-cfg.start_trans_range, cfg.start_trans_range);
      init = pose_compose(se3_exp(t), base);
    }
    SolveReport rep;
    try {
      rep = solve_pnp(x, init, cfg);
    } catch (const Error&) {
      continue;
    }
    rep.restart_index = s;
    if (rep.converged && (!have_best || rep.cost < best.cost)) {
      best = rep;
      have_best = true;
    }
  }
  if (!have_best)
    raise(ErrorCode::NoConvergentSolution, "no convergent solution");
  return best;
}

}  // namespace kgnpro
