#pragma once

#include <Eigen/Core>
#include <vector>

#include "kgnpro/pnp.hpp"

namespace kgnpro {

// The pose density is the unnormalized exp(-weighted_cost). Sampling happens
// in a fixed coordinate chart: either the 6-D tangent space anchored at the
// solved mode, or the global (x, y, theta) chart for planar problems. All
// proposal densities of one run live in the same chart, so the mixture
// reweighting needs no change-of-measure terms.

struct MCConfig {
  int rounds = 4;
  int k_per_round = 128;
  double nu = 3.0;  // Student-t tail weight of the proposal factors
  double scale_floor_trans = 1e-4;  // m
  double scale_floor_rot = 1e-3;    // rad
  double fallback_trans = 0.01;     // m, used when the Hessian is degenerate
  double fallback_rot = 0.1;        // rad
};

struct ProposalDistribution {
  Pose center_pose;
  Vector3d trans_scale{0.0, 0.0, 0.0};
  Vector3d rot_scale{0.0, 0.0, 0.0};
  double nu = 3.0;
  // Chart-space view of the same proposal.
  Eigen::VectorXd center;
  Eigen::VectorXd scales;
};

struct McSample {
  Pose pose;
  Eigen::VectorXd coords;
  double log_lik = 0.0;  // -weighted_cost at pose
  double log_mix = 0.0;  // mixture proposal log density at coords
  double log_v = 0.0;    // log_lik - log_mix
  double v = 0.0;
};

struct MCSampleSet {
  bool planar = false;
  Pose anchor;                // tangent chart anchor (ignored when planar)
  double planar_depth = 0.0;  // fixed camera-frame z of the planar chart
  std::vector<McSample> samples;
  std::vector<ProposalDistribution> proposals;

  int dim() const { return planar ? 3 : 6; }
};

Pose chart_to_pose(const MCSampleSet& s, const Eigen::VectorXd& coords);
double mixture_logpdf(const MCSampleSet& s, const Eigen::VectorXd& coords);

// log of the unnormalized pose density: -weighted_cost(x, y).
double log_likelihood(const CorrespondenceSet& x, const Pose& y);

// Adaptive multiple importance sampling around a converged mode. Round one
// draws from a Student-t proposal scaled by the inverse Gauss-Newton Hessian
// diagonal (floored); later rounds re-fit center and scales from the weighted
// samples accumulated so far, and every round re-weights all samples against
// the equal-weight mixture of the proposals used so far.
MCSampleSet amis_sample(const CorrespondenceSet& x, const SolveReport& mode,
                        const MCConfig& cfg, SeededRng& rng);

// Planar (x, y, theta) restriction: translation in the camera x/y plane at a
// fixed depth, rotation about the camera z axis.
Pose planar_pose(const Eigen::Vector3d& coords, double depth);

struct PlanarSolveReport {
  Eigen::Vector3d coords{0.0, 0.0, 0.0};
  double cost = 0.0;
  bool converged = false;
  Eigen::Matrix3d hessian;
};

PlanarSolveReport solve_planar(const CorrespondenceSet& x, double depth,
                               const Eigen::Vector3d& init,
                               const SolverConfig& cfg);

MCSampleSet amis_sample_planar(const CorrespondenceSet& x, double depth,
                               const PlanarSolveReport& mode,
                               const MCConfig& cfg, SeededRng& rng);

// log-mean of importance weights, evaluated with log-sum-exp.
double l_pred(const MCSampleSet& s);

// Re-evaluates l_pred on a frozen sample set: the stored poses and mixture
// densities are kept, only the likelihood exponent is recomputed against the
// given correspondences. This is the estimator as a deterministic function of
// (p2d, w2d), which is what the gradient differentiates.
double l_pred_reweighted(const MCSampleSet& s, const CorrespondenceSet& x);

double effective_sample_size(const MCSampleSet& s);

// One grasp's supervision: its correspondences and the matched target pose.
struct GraspSupervision {
  CorrespondenceSet x;
  Pose target;
};

struct KlConfig {
  SolverConfig solver;
  MCConfig mc;
};

struct GraspKlTerm {
  double l_pred = 0.0;
  double target_cost = 0.0;  // weighted_cost at the matched target pose
  SolveReport mode;
};

struct KlBreakdown {
  double total = 0.0;
  std::vector<GraspKlTerm> per_grasp;
};

struct GradientBundle {
  double loss = 0.0;
  // Indexed [grasp][correspondence].
  std::vector<std::vector<Vector2d>> d_p2d;
  std::vector<std::vector<Vector2d>> d_w2d;
  std::vector<GraspKlTerm> per_grasp;
};

// Sum over grasps of l_pred + weighted_cost at the matched target (the
// Dirac-target cross term). Grasp g uses the derived rng stream g.
KlBreakdown kl_loss(const std::vector<GraspSupervision>& grasps,
                    const KlConfig& cfg, const SeededRng& rng);

// Loss plus its analytic gradient w.r.t. every p2d and w2d, computed from the
// same sample sets as the loss value.
GradientBundle kl_loss_grad(const std::vector<GraspSupervision>& grasps,
                            const KlConfig& cfg, const SeededRng& rng);

// Fixed-sample building blocks (shared by the ops above and by gradcheck).
double kl_value_on_samples(const MCSampleSet& s, const CorrespondenceSet& x,
                           const Pose& target);
GraspKlTerm kl_grad_on_samples(const MCSampleSet& s,
                               const CorrespondenceSet& x, const Pose& target,
                               std::vector<Vector2d>& d_p2d,
                               std::vector<Vector2d>& d_w2d);

struct PlanarBox {
  Eigen::Vector3d lo{0.0, 0.0, 0.0};
  Eigen::Vector3d hi{1.0, 1.0, 1.0};
};

// Midpoint-rule quadrature of exp(-weighted_cost) over the box in the planar
// chart. Verification oracle for l_pred; not part of the product path.
double planar_grid_oracle(const CorrespondenceSet& x, double depth,
                          const PlanarBox& box, int resolution);

}  // namespace kgnpro
