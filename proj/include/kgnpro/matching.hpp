#pragma once

#include <vector>

#include "kgnpro/geometry.hpp"

namespace kgnpro {

struct PoseDistanceParams {
  double rho = 0.05;      // meters per radian
  double max_dist = 0.1;  // meter-equivalent gate for matching
  bool use_symmetry = true;
};

// ||t_a - t_b|| + rho * geodesic(R_a, R_b); with symmetry on, minimized over
// the parallel-jaw flip (a grasp and its finger-swapped twin are identical).
double pose_distance(const Pose& a, const Pose& b, const PoseDistanceParams& p);

// Rotation part alone, in radians, symmetry-reduced the same way.
double rotation_error(const Pose& a, const Pose& b, bool use_symmetry);

struct MatchAssignment {
  int pred = 0;
  int gt = 0;
  double dist = 0.0;
};

struct MatchResult {
  std::vector<MatchAssignment> assignments;
  std::vector<int> unmatched_preds;
};

// Greedy globally-sorted one-to-one matching: all (pred, gt) pairs within
// max_dist sorted by ascending distance (ties by pred then gt index); a pair
// is accepted iff both sides are still free.
MatchResult nn_match(const std::vector<Pose>& preds,
                     const std::vector<Pose>& gts,
                     const PoseDistanceParams& p);

}  // namespace kgnpro
