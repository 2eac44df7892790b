#include "kgnpro/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kgnpro/error.hpp"
#include "kgnpro/textio.hpp"

namespace kgnpro {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_inverse(double w) { return std::log(std::expm1(w)); }

std::array<Vector2d, 4> PredictorGrasp::weights() const {
  std::array<Vector2d, 4> w;
  for (int i = 0; i < 4; ++i)
    w[i] = {softplus(logits[i].x()), softplus(logits[i].y())};
  return w;
}

namespace {

std::array<Vector2d, 4> logits_at_unit_weight() {
  std::array<Vector2d, 4> l;
  for (auto& v : l) v.setConstant(softplus_inverse(1.0));
  return l;
}

CorrespondenceSet grasp_correspondences(const PredictorGrasp& g,
                                        const CameraIntrinsics& k,
                                        const GripperModel& gripper) {
  CorrespondenceSet x;
  x.intrinsics = k;
  const auto corners = gripper.corners();
  const auto w = g.weights();
  for (int i = 0; i < 4; ++i) x.items.push_back({g.keypoints[i], corners[i], w[i]});
  return x;
}

std::vector<Pose> gt_poses_cam(const Scene& scene) {
  std::vector<Pose> out;
  for (int i = 0; i < static_cast<int>(scene.grasps.size()); ++i)
    out.push_back(grasp_pose_cam(scene, i));
  return out;
}

struct SceneEval {
  LossBreakdown breakdown;
  // Gradients, same indexing as the predictor.
  std::vector<std::array<Vector2d, 4>> d_keypoints;
  std::vector<std::array<Vector2d, 4>> d_logits;
  std::vector<double> d_map_h, d_map_s, d_map_o;
  std::vector<std::pair<double, double>> pose_errors;  // (m, rad) per grasp
};

SceneEval eval_scene(const ParametricPredictor& pred, const Scene& scene,
                     const LossWeights& w, const TrainerConfig& cfg,
                     const SeededRng& rng, bool want_grads) {
  SceneEval ev;
  ev.d_keypoints.assign(pred.grasps.size(), {});
  ev.d_logits.assign(pred.grasps.size(), {});
  ev.breakdown.predictions = static_cast<int>(pred.grasps.size());

  const std::vector<Pose> gts = gt_poses_cam(scene);

  // 2D map pathway.
  const bool map_path =
      pred.has_map && (w.lambda_h > 0.0 || w.lambda_s > 0.0 || w.lambda_o > 0.0);
  if (map_path) {
    std::vector<Pose> cam_grasps = gts;
    const EncodeResult gt_map =
        encode_grasps(cam_grasps, scene.intrinsics, cfg.gripper, cfg.stride);
    const auto mask = peak_cells(gt_map.map);
    ev.breakdown.l_h = focal_loss(pred.map.h, gt_map.map.h);
    ev.breakdown.l_s = l1_offset_loss(pred.map.s, gt_map.map.s, mask, 2);
    ev.breakdown.l_o = l1_offset_loss(pred.map.o, gt_map.map.o, mask, 8);
    if (want_grads) {
      ev.d_map_h = focal_loss_grad(pred.map.h, gt_map.map.h);
      ev.d_map_s = l1_offset_loss_grad(pred.map.s, gt_map.map.s, mask, 2);
      ev.d_map_o = l1_offset_loss_grad(pred.map.o, gt_map.map.o, mask, 8);
    }
  }

  // Solve each predicted grasp, match to GT, run the probabilistic layer.
  std::vector<Pose> solved(pred.grasps.size());
  std::vector<bool> solved_ok(pred.grasps.size(), false);
  for (size_t g = 0; g < pred.grasps.size(); ++g) {
    const CorrespondenceSet x =
        grasp_correspondences(pred.grasps[g], scene.intrinsics, cfg.gripper);
    SeededRng stream = rng.derive(7000 + g);
    try {
      solved[g] = multi_start_solve(x, cfg.kl.solver, stream).pose;
      solved_ok[g] = true;
    } catch (const Error&) {
      solved_ok[g] = false;
    }
    if (solved_ok[g] && !gts.empty()) {
      double best = -1.0, bt = 0.0, br = 0.0;
      for (const auto& gt : gts) {
        const double d = pose_distance(solved[g], gt, cfg.match);
        if (best < 0.0 || d < best) {
          best = d;
          bt = translation_distance(solved[g], gt);
          br = rotation_error(solved[g], gt, cfg.match.use_symmetry);
        }
      }
      ev.pose_errors.push_back({bt, br});
    }
  }

  if (w.lambda_kl > 0.0 && !gts.empty()) {
    std::vector<Pose> matchable;
    std::vector<size_t> matchable_idx;
    for (size_t g = 0; g < pred.grasps.size(); ++g) {
      if (!solved_ok[g]) continue;
      matchable.push_back(solved[g]);
      matchable_idx.push_back(g);
    }
    const MatchResult match = nn_match(matchable, gts, cfg.match);
    ev.breakdown.matched = static_cast<int>(match.assignments.size());
    if (!match.assignments.empty()) {
      std::vector<GraspSupervision> sup;
      std::vector<size_t> sup_pred;
      for (const auto& a : match.assignments) {
        const size_t g = matchable_idx[static_cast<size_t>(a.pred)];
        sup.push_back({grasp_correspondences(pred.grasps[g], scene.intrinsics,
                                             cfg.gripper),
                       gts[static_cast<size_t>(a.gt)]});
        sup_pred.push_back(g);
      }
      if (want_grads) {
        const GradientBundle bundle = kl_loss_grad(sup, cfg.kl, rng);
        ev.breakdown.l_kl = bundle.loss;
        for (size_t m = 0; m < sup.size(); ++m) {
          const size_t g = sup_pred[m];
          const auto& lg = pred.grasps[g].logits;
          for (int i = 0; i < 4; ++i) {
            ev.d_keypoints[g][i] += w.lambda_kl * bundle.d_p2d[m][i];
            // Chain rule through weights = softplus(logits).
            ev.d_logits[g][i].x() += w.lambda_kl * bundle.d_w2d[m][i].x() *
                                     sigmoid(lg[i].x());
            ev.d_logits[g][i].y() += w.lambda_kl * bundle.d_w2d[m][i].y() *
                                     sigmoid(lg[i].y());
          }
        }
      } else {
        ev.breakdown.l_kl = kl_loss(sup, cfg.kl, rng).total;
      }
    }
  }

  double total = 0.0;
  if (ev.breakdown.l_h) total += w.lambda_h * *ev.breakdown.l_h;
  if (ev.breakdown.l_s) total += w.lambda_s * *ev.breakdown.l_s;
  if (ev.breakdown.l_o) total += w.lambda_o * *ev.breakdown.l_o;
  if (ev.breakdown.l_kl) total += w.lambda_kl * *ev.breakdown.l_kl;
  ev.breakdown.total = total;
  return ev;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ParametricPredictor predictor_from_scene(const Scene& scene, double perturb_px,
                                         SeededRng& rng) {
  ParametricPredictor pred;
  GripperModel gripper;
  for (int gi = 0; gi < static_cast<int>(scene.grasps.size()); ++gi) {
    const Pose cam = grasp_pose_cam(scene, gi);
    PredictorGrasp g;
    g.logits = logits_at_unit_weight();
    const auto corners = gripper.corners();
    for (int i = 0; i < 4; ++i) {
      const Vector2d exact = project(scene.intrinsics, cam.apply(corners[i]));
      const double ang = rng.uniform(0.0, 2.0 * M_PI);
      g.keypoints[i] =
          exact + perturb_px * Vector2d(std::cos(ang), std::sin(ang));
    }
    pred.grasps.push_back(g);
  }
  return pred;
}

ParametricPredictor predictor_from_observations(
    const std::vector<Observation>& obs) {
  ParametricPredictor pred;
  for (const auto& ob : obs) {
    PredictorGrasp g;
    g.logits = logits_at_unit_weight();
    for (int i = 0; i < 4; ++i) g.keypoints[i] = ob.x.items[i].p2d;
    pred.grasps.push_back(g);
  }
  return pred;
}

LossBreakdown total_loss(const ParametricPredictor& pred, const Scene& scene,
                         const LossWeights& w, const TrainerConfig& cfg,
                         const SeededRng& rng) {
  return eval_scene(pred, scene, w, cfg, rng, /*want_grads=*/false).breakdown;
}

double lr_schedule(int step, double base_lr,
                   const std::vector<int>& milestones) {
  double lr = base_lr;
  for (int m : milestones)
    if (step >= m) lr *= 0.1;
  return lr;
}

std::vector<std::pair<double, double>> predictor_pose_errors(
    const ParametricPredictor& pred, const Scene& scene,
    const TrainerConfig& cfg, const SeededRng& rng) {
  LossWeights w;
  w.lambda_h = w.lambda_s = w.lambda_o = 0.0;
  w.lambda_kl = 0.0;  // only the solve/match stage is needed
  return eval_scene(pred, scene, w, cfg, rng, false).pose_errors;
}

TrainingReport train_toy(const std::vector<Scene>& scenes,
                         std::vector<ParametricPredictor> predictors,
                         const LossWeights& w, const OptimConfig& opt,
                         const TrainerConfig& cfg, const SeededRng& rng) {
  if (scenes.empty())
    raise(ErrorCode::InvalidArgument, "train_toy: no scenes");
  if (scenes.size() != predictors.size())
    raise(ErrorCode::InvalidArgument, "train_toy: predictor/scene mismatch");

  TrainingReport report;

  // Momentum buffers mirror the parameter layout.
  struct Velocity {
    std::vector<std::array<Vector2d, 4>> kp, logit;
    std::vector<double> map_h, map_s, map_o;
  };
  std::vector<Velocity> vel(scenes.size());
  for (size_t s = 0; s < scenes.size(); ++s) {
    vel[s].kp.assign(predictors[s].grasps.size(), {});
    vel[s].logit.assign(predictors[s].grasps.size(), {});
    if (predictors[s].has_map) {
      vel[s].map_h.assign(predictors[s].map.h.size(), 0.0);
      vel[s].map_s.assign(predictors[s].map.s.size(), 0.0);
      vel[s].map_o.assign(predictors[s].map.o.size(), 0.0);
    }
  }

  for (int iter = 0; iter < opt.iters; ++iter) {
    const SeededRng iter_rng =
        opt.fresh_mc_seed ? rng.derive(100000 + static_cast<std::uint64_t>(iter))
                          : rng.derive(100000);
    const double lr_px = lr_schedule(iter, opt.lr_px, opt.milestones);
    const double lr_logit = lr_schedule(iter, opt.lr_logit, opt.milestones);

    TrainRow row;
    row.iter = iter;
    double total = 0.0;
    double lh = 0.0, ls = 0.0, lo = 0.0, lkl = 0.0;
    bool any_h = false, any_s = false, any_o = false, any_kl = false;
    std::vector<double> errs_t, errs_r;

    std::vector<SceneEval> evals;
    evals.reserve(scenes.size());
    for (size_t s = 0; s < scenes.size(); ++s)
      evals.push_back(eval_scene(predictors[s], scenes[s], w, cfg,
                                 iter_rng.derive(s), /*want_grads=*/true));

    for (size_t s = 0; s < scenes.size(); ++s) {
      const SceneEval& ev = evals[s];
      total += ev.breakdown.total;
      if (ev.breakdown.l_h) lh += *ev.breakdown.l_h, any_h = true;
      if (ev.breakdown.l_s) ls += *ev.breakdown.l_s, any_s = true;
      if (ev.breakdown.l_o) lo += *ev.breakdown.l_o, any_o = true;
      if (ev.breakdown.l_kl) lkl += *ev.breakdown.l_kl, any_kl = true;
      for (const auto& [dt, dr] : ev.pose_errors) {
        errs_t.push_back(dt * 100.0);
        errs_r.push_back(dr * 180.0 / M_PI);
      }
    }

    if (!std::isfinite(total)) {
      report.aborted = true;
      report.abort_reason =
          "non-finite loss at iteration " + std::to_string(iter);
      break;
    }

    row.total = total;
    if (any_h) row.l_h = lh;
    if (any_s) row.l_s = ls;
    if (any_o) row.l_o = lo;
    if (any_kl) row.l_kl = lkl;
    row.median_err_cm = median(errs_t);
    row.median_err_deg = median(errs_r);
    report.rows.push_back(row);

    // Momentum step.
    for (size_t s = 0; s < scenes.size(); ++s) {
      ParametricPredictor& p = predictors[s];
      const SceneEval& ev = evals[s];
      for (size_t g = 0; g < p.grasps.size(); ++g) {
        for (int i = 0; i < 4; ++i) {
          auto& vk = vel[s].kp[g][i];
          vk = opt.momentum * vk - lr_px * ev.d_keypoints[g][i];
          p.grasps[g].keypoints[i] += vk;
          auto& vl = vel[s].logit[g][i];
          vl = opt.momentum * vl - lr_logit * ev.d_logits[g][i];
          p.grasps[g].logits[i] += vl;
        }
      }
      if (p.has_map && !ev.d_map_h.empty()) {
        for (size_t i = 0; i < p.map.h.size(); ++i) {
          vel[s].map_h[i] = opt.momentum * vel[s].map_h[i] -
                            lr_px * w.lambda_h * ev.d_map_h[i];
          p.map.h[i] = std::clamp(p.map.h[i] + vel[s].map_h[i], 1e-6, 1.0 - 1e-6);
        }
        for (size_t i = 0; i < p.map.s.size(); ++i) {
          vel[s].map_s[i] = opt.momentum * vel[s].map_s[i] -
                            lr_px * w.lambda_s * ev.d_map_s[i];
          p.map.s[i] += vel[s].map_s[i];
        }
        for (size_t i = 0; i < p.map.o.size(); ++i) {
          vel[s].map_o[i] = opt.momentum * vel[s].map_o[i] -
                            lr_px * w.lambda_o * ev.d_map_o[i];
          p.map.o[i] += vel[s].map_o[i];
        }
      }
    }
  }

  report.predictors = std::move(predictors);
  return report;
}

std::string training_csv(const TrainingReport& report) {
  std::ostringstream os;
  os << "iter,L_H,L_S,L_O,L_KL,total,median_pose_err_cm,median_pose_err_deg\n";
  const auto opt_field = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  for (const auto& r : report.rows) {
    os << r.iter << ',' << opt_field(r.l_h) << ',' << opt_field(r.l_s) << ','
       << opt_field(r.l_o) << ',' << opt_field(r.l_kl) << ','
       << format_double(r.total) << ',' << format_double(r.median_err_cm)
       << ',' << format_double(r.median_err_deg) << '\n';
  }
  return os.str();
}

}  // namespace kgnpro
