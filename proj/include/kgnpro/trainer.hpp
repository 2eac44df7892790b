#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kgnpro/keypoint_map.hpp"
#include "kgnpro/matching.hpp"
#include "kgnpro/prob_pnp.hpp"
#include "kgnpro/scene.hpp"

namespace kgnpro {

double softplus(double x);
double sigmoid(double x);
// softplus^-1, used to initialize logits at a target weight.
double softplus_inverse(double w);

// Free parameters standing in for a network's outputs on one scene: per-grasp
// 2D keypoints and confidence logits (weights = softplus(logits) stay
// positive), plus an optional learnable keypoint map for the 2D-loss pathway.
struct PredictorGrasp {
  std::array<Vector2d, 4> keypoints;
  std::array<Vector2d, 4> logits;

  std::array<Vector2d, 4> weights() const;
};

struct ParametricPredictor {
  std::vector<PredictorGrasp> grasps;
  bool has_map = false;
  KeypointMap map;
};

// Keypoints at the exact GT projections shifted by `perturb_px` in a random
// direction per keypoint; logits at softplus_inverse(1).
ParametricPredictor predictor_from_scene(const Scene& scene, double perturb_px,
                                         SeededRng& rng);
// Keypoints taken from (possibly noisy) observations.
ParametricPredictor predictor_from_observations(
    const std::vector<Observation>& obs);

struct LossWeights {
  double lambda_h = 1.0;
  double lambda_s = 1.0;
  double lambda_o = 1.0;
  double lambda_kl = 0.1;
};

struct LossBreakdown {
  // Components are unweighted; a component absent from the run (pathway
  // disabled, or no matched grasp for the KL term) stays unset rather than
  // reporting zero.
  std::optional<double> l_h, l_s, l_o, l_kl;
  double total = 0.0;
  int predictions = 0;
  int matched = 0;
};

struct TrainerConfig {
  KlConfig kl;
  PoseDistanceParams match;
  GripperModel gripper;
  int stride = 4;
};

LossBreakdown total_loss(const ParametricPredictor& pred, const Scene& scene,
                         const LossWeights& w, const TrainerConfig& cfg,
                         const SeededRng& rng);

struct OptimConfig {
  int iters = 500;
  double lr_px = 0.1;
  double lr_logit = 0.01;
  double momentum = 0.9;
  std::vector<int> milestones;  // lr /= 10 at each
  bool fresh_mc_seed = true;    // false: same MC stream every iteration
};

double lr_schedule(int step, double base_lr, const std::vector<int>& milestones);

struct TrainRow {
  int iter = 0;
  std::optional<double> l_h, l_s, l_o, l_kl;
  double total = 0.0;
  double median_err_cm = 0.0;
  double median_err_deg = 0.0;
};

struct TrainingReport {
  std::vector<TrainRow> rows;
  std::vector<ParametricPredictor> predictors;  // final state, one per scene
  bool aborted = false;
  std::string abort_reason;
};

// Gradient descent with momentum on every predictor's keypoints and logits
// (and map, when present), one predictor per scene. Deterministic given the
// rng seed.
TrainingReport train_toy(const std::vector<Scene>& scenes,
                         std::vector<ParametricPredictor> predictors,
                         const LossWeights& w, const OptimConfig& opt,
                         const TrainerConfig& cfg, const SeededRng& rng);

std::string training_csv(const TrainingReport& report);

// Per-grasp pose errors of a predictor against the scene's GT grasps
// (nearest GT under pose_distance): (meters, radians) pairs.
std::vector<std::pair<double, double>> predictor_pose_errors(
    const ParametricPredictor& pred, const Scene& scene,
    const TrainerConfig& cfg, const SeededRng& rng);

}  // namespace kgnpro
