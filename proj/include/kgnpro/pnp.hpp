#pragma once

#include <Eigen/Core>
#include <vector>

#include "kgnpro/geometry.hpp"
#include "kgnpro/rng.hpp"

namespace kgnpro {

// One 2D-3D correspondence. The 3D point lives in the model (gripper) frame;
// the per-coordinate weight scales the residual inside the cost.
struct Correspondence {
  Vector2d p2d{0.0, 0.0};
  Vector3d p3d{0.0, 0.0, 0.0};
  Vector2d w2d{1.0, 1.0};
};

struct CorrespondenceSet {
  std::vector<Correspondence> items;
  CameraIntrinsics intrinsics;
};

struct SolverConfig {
  int max_iters = 100;
  double step_tol = 1e-10;
  double grad_tol = 1e-9;
  int n_starts = 8;
  double lambda_init = 1e-3;
  double lambda_min = 1e-12;
  double lambda_max = 1e6;
  // Multi-start perturbation ranges and the canonical-start depth.
  double start_rot_range = 40.0 * M_PI / 180.0;
  double start_trans_range = 0.10;
  double start_depth = 0.5;
};

struct SolveReport {
  Pose pose;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  int restart_index = 0;
  // Accepted-step cost sequence, starting at the initial cost.
  std::vector<double> cost_trace;
};

// Residual for one correspondence at pose y: project(y * p3d) - p2d, before
// weighting. If the transformed point falls behind the camera the residual is
// replaced by a constant 1e6 px per coordinate so line searches stay total;
// such points also contribute zero Jacobian rows.
Vector2d reproj_error(const Correspondence& c, const CameraIntrinsics& k,
                      const Pose& y);

// 1/2 sum_i || w_i (.) E_i(y) ||^2
double weighted_cost(const CorrespondenceSet& x, const Pose& y);

struct CostDerivatives {
  Vector6d gradient;                                     // J^T r
  Eigen::Matrix<double, Eigen::Dynamic, 6> jacobian;     // 2N x 6, weighted
  Eigen::VectorXd residuals;                             // 2N, weighted
  double cost = 0.0;
};

// Derivatives of the weighted residuals w.r.t. a left-multiplied twist
// perturbation at y (translation columns first).
CostDerivatives cost_jacobian(const CorrespondenceSet& x, const Pose& y);

// Levenberg-Marquardt from a single initial pose.
SolveReport solve_pnp(const CorrespondenceSet& x, const Pose& init,
                      const SolverConfig& cfg);

// Canonical start plus seeded random restarts; returns the lowest-cost
// converged report. Deterministic given the rng seed.
SolveReport multi_start_solve(const CorrespondenceSet& x,
                              const SolverConfig& cfg, SeededRng& rng);

// The canonical start pose used by multi_start_solve (identity rotation at
// the back-projected 2D centroid).
Pose canonical_start(const CorrespondenceSet& x, double depth);

}  // namespace kgnpro
