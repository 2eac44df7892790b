#pragma once

#include <string>
#include <vector>

#include "kgnpro/matching.hpp"

namespace kgnpro {

struct SuccessThresholds {
  double translation_m = 0.01;
  double rotation_deg = 10.0;
};

struct GraspSuccess {
  bool success = false;
  int matched_gt = -1;
};

// True iff some GT pose is within BOTH thresholds; the matched index is the
// closest qualifying GT under pose_distance.
GraspSuccess grasp_success(const Pose& pred, const std::vector<Pose>& gts,
                           const SuccessThresholds& th,
                           const PoseDistanceParams& params);

struct ThresholdCell {
  SuccessThresholds th;
  long long predictions = 0;
  long long successes = 0;
  long long gts = 0;
  long long covered_gts = 0;

  double success_rate() const {
    return predictions ? static_cast<double>(successes) / predictions : 0.0;
  }
  double coverage_rate() const {
    return gts ? static_cast<double>(covered_gts) / gts : 0.0;
  }
};

struct EvalReport {
  std::vector<ThresholdCell> grid;                  // aggregate over scenes
  std::vector<std::vector<ThresholdCell>> per_scene;  // [scene][cell]
};

// One-to-one success accounting per scene: qualifying (pred, gt) pairs are
// consumed greedily by ascending pose_distance. Coverage counts GT grasps
// with any prediction inside the thresholds (not consumed).
EvalReport evaluate(const std::vector<std::vector<Pose>>& pred_sets,
                    const std::vector<std::vector<Pose>>& gt_sets,
                    const std::vector<SuccessThresholds>& grid,
                    const PoseDistanceParams& params);

std::vector<SuccessThresholds> default_threshold_grid();

// Writes <base>.csv (machine-readable grid) and <base>.txt (table, including
// the published reference block). CSV doubles reload bit-exactly.
void emit_report(const EvalReport& r, const std::string& base_path);

// Parses "1.0:10,1.5:10,2.0:20" (cm:deg pairs).
std::vector<SuccessThresholds> parse_threshold_grid(const std::string& text);

}  // namespace kgnpro
