#include "kgnpro/matching.hpp"

#include <algorithm>

namespace kgnpro {

double rotation_error(const Pose& a, const Pose& b, bool use_symmetry) {
  double angle = rotation_angle(a, b);
  if (use_symmetry) {
    const Pose flipped = pose_compose(a, GripperModel::symmetry_flip());
    angle = std::min(angle, rotation_angle(flipped, b));
  }
  return angle;
}

double pose_distance(const Pose& a, const Pose& b,
                     const PoseDistanceParams& p) {
  return translation_distance(a, b) +
         p.rho * rotation_error(a, b, p.use_symmetry);
}

MatchResult nn_match(const std::vector<Pose>& preds,
                     const std::vector<Pose>& gts,
                     const PoseDistanceParams& p) {
  struct Pair {
    double dist;
    int pred, gt;
  };
  std::vector<Pair> pairs;
  for (int i = 0; i < static_cast<int>(preds.size()); ++i) {
    for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
      const double d = pose_distance(preds[i], gts[j], p);
      if (d <= p.max_dist) pairs.push_back({d, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });

  MatchResult out;
  std::vector<bool> pred_used(preds.size(), false);
  std::vector<bool> gt_used(gts.size(), false);
  for (const auto& pr : pairs) {
    if (pred_used[pr.pred] || gt_used[pr.gt]) continue;
    pred_used[pr.pred] = true;
    gt_used[pr.gt] = true;
    out.assignments.push_back({pr.pred, pr.gt, pr.dist});
  }
  for (int i = 0; i < static_cast<int>(preds.size()); ++i)
    if (!pred_used[i]) out.unmatched_preds.push_back(i);
  return out;
}

}  // namespace kgnpro
